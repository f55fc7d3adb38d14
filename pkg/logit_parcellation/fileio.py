"""Readers and writers for meshes, masks, matrices, dendrograms and parcellations.

Text formats report problems with line numbers, the binary matrix format
with byte offsets. Floats in machine-readable outputs use 17 significant
digits so they survive a round trip.
"""

import csv
import logging
import struct
from pathlib import Path

import numpy as np

from .cluster import Dendrogram, Merge, Parcellation
from .errors import FormatError, ParameterError, StructuralMeshError
from .mesh import SurfaceMesh
from .transform import ConnectivityMatrix, Space

logger = logging.getLogger(__name__)

CMAT_MAGIC = b"CMAT"
CMAT_VERSION = 1
CMAT_HEADER = struct.Struct("<4sIBQQ")
MAX_CSV_ENTRIES = 10**6
SPACE_CHOICES = ("auto", "probability", "logit")


def format_float(value):
    return f"{value:.17g}"


def _content_lines(fh):
    """Yield (line_number, tokens) for non-blank, non-comment lines."""
    for number, line in enumerate(fh, 1):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            yield number, stripped.split()


def read_off(path):
    """Read a triangle mesh from an ASCII OFF file.

    Args:
        path (str or Path): File to read.

    Returns:
        SurfaceMesh: Mesh with 0-based triangles.
    """
    with open(path) as fh:
        lines = _content_lines(fh)
        number, tokens = next(lines, (1, None))
        if tokens is None or tokens[0] != "OFF":
            raise FormatError("Missing OFF header", path=path, line=number)
        rest = tokens[1:]
        if not rest:
            number, rest = next(lines, (number + 1, None))
        if rest is None or len(rest) < 2:
            raise FormatError("Expected counts line 'nV nF nE'", path=path, line=number)
        try:
            n_vertices, n_faces = int(rest[0]), int(rest[1])
        except ValueError:
            raise FormatError("Counts must be integers", path=path, line=number) from None

        positions = np.empty((n_vertices, 3))
        for i in range(n_vertices):
            number, tokens = next(lines, (None, None))
            if tokens is None:
                raise FormatError(f"File ends after {i} of {n_vertices} vertices", path=path)
            if len(tokens) < 3:
                raise FormatError("Vertex line needs three coordinates", path=path, line=number)
            try:
                positions[i] = [float(t) for t in tokens[:3]]
            except ValueError:
                raise FormatError("Vertex coordinates must be numbers", path=path, line=number) from None

        triangles = np.empty((n_faces, 3), dtype=np.int64)
        for i in range(n_faces):
            number, tokens = next(lines, (None, None))
            if tokens is None:
                raise FormatError(f"File ends after {i} of {n_faces} faces", path=path)
            try:
                values = [int(t) for t in tokens[:4]]
            except ValueError:
                raise FormatError("Face indices must be integers", path=path, line=number) from None
            if len(values) != 4 or values[0] != 3:
                raise FormatError("Only triangular faces '3 i j k' are supported",
                                  path=path, line=number)
            triangles[i] = values[1:]

    try:
        mesh = SurfaceMesh(positions, triangles)
    except StructuralMeshError as exc:
        raise StructuralMeshError(str(exc), path=path) from exc
    mesh.validate()
    return mesh


def write_off(path, mesh):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for x, y, z in mesh.vertex_positions:
            fh.write(f"{format_float(x)} {format_float(y)} {format_float(z)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")


def read_mask(path, n_vertices=None):
    """Read a vertex mask: one 0 or 1 per line."""
    values = []
    with open(path) as fh:
        for number, line in enumerate(fh, 1):
            token = line.strip()
            if not token:
                continue
            if token not in ("0", "1"):
                raise FormatError(f"Mask entries must be 0 or 1, got {token!r}",
                                  path=path, line=number)
            values.append(token == "1")
    if n_vertices is not None and len(values) != n_vertices:
        raise FormatError(f"Mask has {len(values)} entries, mesh has {n_vertices} vertices",
                          path=path)
    return np.array(values, dtype=bool)


def write_mask(path, mask):
    with open(path, "w") as fh:
        for flag in np.asarray(mask, dtype=bool):
            fh.write("1\n" if flag else "0\n")


def read_cmat(path):
    """Read a binary CMAT connectivity matrix."""
    data = Path(path).read_bytes()
    if len(data) < CMAT_HEADER.size:
        raise FormatError("Truncated header", path=path, offset=len(data))
    magic, version, tag, n_seeds, n_cols = CMAT_HEADER.unpack_from(data)
    if magic != CMAT_MAGIC:
        raise FormatError(f"Bad magic {magic!r}", path=path, offset=0)
    if version != CMAT_VERSION:
        raise FormatError(f"Unsupported version {version}", path=path, offset=4)
    if tag not in (Space.PROBABILITY, Space.LOGIT):
        raise FormatError(f"Unknown space tag {tag}", path=path, offset=8)
    expected = CMAT_HEADER.size + 4 * n_seeds * n_cols
    if len(data) != expected:
        raise FormatError(f"Expected {expected} bytes for a {n_seeds}x{n_cols} matrix, "
                          f"found {len(data)}", path=path, offset=min(len(data), expected))
    values = np.frombuffer(data, dtype="<f4", count=n_seeds * n_cols, offset=CMAT_HEADER.size)
    try:
        return ConnectivityMatrix(values.reshape(n_seeds, n_cols).astype(np.float64), Space(tag))
    except ParameterError as exc:
        raise FormatError(str(exc), path=path, offset=CMAT_HEADER.size) from exc


def write_cmat(path, m):
    with open(path, "wb") as fh:
        fh.write(CMAT_HEADER.pack(CMAT_MAGIC, CMAT_VERSION, int(m.space), m.n_seeds, m.n_targets))
        fh.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())


def read_matrix_csv(path, space):
    """Read a comma-separated matrix; ``space`` is 'probability' or 'logit'."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for number, row in enumerate(csv.reader(fh), 1):
            if not row or not any(cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise FormatError("Non-numeric entry", path=path, line=number) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(f"Row has {len(values)} columns, expected {width}",
                                  path=path, line=number)
            rows.append(values)
            if len(rows) * width > MAX_CSV_ENTRIES:
                raise FormatError(f"CSV matrices are limited to {MAX_CSV_ENTRIES} entries",
                                  path=path, line=number)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    try:
        return ConnectivityMatrix(values, Space[space.upper()])
    except ParameterError as exc:
        raise FormatError(str(exc), path=path) from exc


def write_matrix_csv(path, m):
    if m.values.size > MAX_CSV_ENTRIES:
        raise ParameterError(f"CSV matrices are limited to {MAX_CSV_ENTRIES} entries")
    write_rows_csv(path, None, m.values.tolist())


def load_matrix(path, space="auto"):
    """Load a CMAT or CSV matrix, choosing the space.

    CMAT files carry their space in the header; ``space`` overrides it.
    CSV files carry none: with 'auto', a matrix whose entries all lie in
    [0, 1] is read as probabilities, anything else as logits.
    """
    if space not in SPACE_CHOICES:
        raise ParameterError(f"space must be one of {SPACE_CHOICES}, got {space!r}")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if space == "auto":
            raw = read_matrix_csv(path, "logit")
            inferred = "probability" if np.all((raw.values >= 0) & (raw.values <= 1)) else "logit"
            logger.warning("%s carries no space tag; reading it as %s", path, inferred)
            return ConnectivityMatrix(raw.values, Space[inferred.upper()])
        return read_matrix_csv(path, space)
    m = read_cmat(path)
    if space != "auto" and Space[space.upper()] is not m.space:
        logger.warning("%s is tagged %s; overriding to %s", path, m.space.name.lower(), space)
        try:
            return ConnectivityMatrix(m.values, Space[space.upper()])
        except ParameterError as exc:
            raise FormatError(str(exc), path=path) from exc
    return m


def write_dendrogram(path, d):
    with open(path, "w") as fh:
        fh.write(f"n_leaves={d.n_leaves}\n")
        for index, m in enumerate(d.merges):
            fh.write(f"{index},{m.left},{m.right},{format_float(m.height)},{m.size}\n")


def read_dendrogram(path):
    """Read a dendrogram CSV written by :func:`write_dendrogram`."""
    with open(path) as fh:
        lines = [(number, line.strip()) for number, line in enumerate(fh, 1) if line.strip()]
    if not lines or not lines[0][1].startswith("n_leaves="):
        raise FormatError("Missing 'n_leaves=N' header", path=path, line=1)
    try:
        n_leaves = int(lines[0][1].split("=", 1)[1])
    except ValueError:
        raise FormatError("n_leaves must be an integer", path=path, line=lines[0][0]) from None

    merges = []
    for expected, (number, line) in enumerate(lines[1:]):
        fields = line.split(",")
        if len(fields) != 5:
            raise FormatError("Expected 'merge_index,left_id,right_id,height,member_count'",
                              path=path, line=number)
        try:
            index, left, right, size = int(fields[0]), int(fields[1]), int(fields[2]), int(fields[4])
            height = float(fields[3])
        except ValueError:
            raise FormatError("Malformed merge record", path=path, line=number) from None
        if index != expected:
            raise FormatError(f"Merge index {index} out of sequence, expected {expected}",
                              path=path, line=number)
        merges.append(Merge(left, right, height, size))
    try:
        return Dendrogram(n_leaves, merges, n_constrained=None)
    except ParameterError as exc:
        raise FormatError(str(exc), path=path) from exc


def write_parcellation(path, labels, seed_indices=None):
    """Write 'seed_index,label' lines.

    Args:
        path (str or Path): Output file.
        labels (Parcellation or array-like): Label per seed.
        seed_indices (array-like, optional): Mesh vertex index of every
            seed; defaults to 0..n-1.
    """
    labels = labels.labels if isinstance(labels, Parcellation) else np.asarray(labels)
    if seed_indices is None:
        seed_indices = np.arange(labels.size)
    with open(path, "w") as fh:
        for seed, label in zip(np.asarray(seed_indices).tolist(), labels.tolist()):
            fh.write(f"{seed},{label}\n")


def read_parcellation_labels(path):
    """Read a parcellation CSV without renumbering.

    Returns:
        tuple: (seed_indices, labels) exactly as stored in the file.
    """
    seeds, labels = [], []
    with open(path) as fh:
        for number, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise FormatError("Expected 'seed_index,label'", path=path, line=number)
            try:
                seeds.append(int(fields[0]))
                labels.append(int(fields[1]))
            except ValueError:
                raise FormatError("Seed index and label must be integers",
                                  path=path, line=number) from None
    return np.array(seeds, dtype=np.int64), np.array(labels, dtype=np.int64)


def read_parcellation(path):
    """Read a parcellation CSV.

    Returns:
        tuple: (seed_indices, Parcellation) with labels canonicalised.
    """
    seeds, labels = read_parcellation_labels(path)
    return seeds, Parcellation.from_labels(labels)


def write_rows_csv(path, header, rows):
    """Write rows to CSV, floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def write_manifest(path, entries):
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path):
    """Read 'key=value' lines into a dict of strings."""
    entries = {}
    with open(path) as fh:
        for number, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError("Expected 'key=value'", path=path, line=number)
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries
