"""Exception hierarchy for the parcellation pipeline.

Every error carries the exit code the command-line front end returns for it.
Parameter and format problems are also ``ValueError`` subclasses.
"""


class ParcellationError(Exception):
    """Base class of all pipeline errors."""

    exit_code = 1


class ParameterError(ParcellationError, ValueError):
    """A parameter lies outside its documented range."""

    exit_code = 2


class SpaceMismatchError(ParameterError):
    """A matrix is in probability space where logit space is required, or vice versa."""


class CorrespondenceError(ParameterError):
    """Inputs that must be aligned seed-by-seed have different shapes or lengths."""


class DimensionError(ParameterError):
    """Feature vectors of different lengths were combined."""


class EmptyCohortError(ParameterError):
    """An average over subjects was requested with no subjects."""


class EmptyDomainError(ParameterError):
    """A mask or selection left no vertices."""


class InvalidTrialsError(ParameterError):
    """Streamline counts were given with a non-positive number of trials."""


class FormatError(ParcellationError, ValueError):
    """A file does not follow its format.

    Args:
        message: What went wrong.
        path: File being read, if known.
        line: 1-based line number for text formats.
        offset: Byte offset for binary formats.
    """

    exit_code = 4

    def __init__(self, message, path=None, line=None, offset=None):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class StructuralMeshError(FormatError):
    """Triangles reference missing vertices or repeat a vertex."""


class ConstraintError(ParcellationError):
    """The minimum-size or adjacency constraint cannot be satisfied."""

    exit_code = 5


class UnreachableVertexError(ConstraintError):
    """Some vertices cannot be reached from the others through the mesh graph."""
