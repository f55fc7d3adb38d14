"""Triangulated surface meshes.

Provides the spatial side of the parcellation: the edge graph of the
triangulation (which seeds are neighbours) and the area carried by every
vertex (used by the minimum cluster size).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import EmptyDomainError, ParameterError, StructuralMeshError

logger = logging.getLogger(__name__)


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Immutable triangle mesh.

    Attributes:
        vertex_positions: (n_vertices, 3) float array of coordinates in mm.
        triangles: (n_triangles, 3) int array of 0-based vertex indices.
    """

    vertex_positions: np.ndarray
    triangles: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))

    def __post_init__(self):
        positions = np.array(self.vertex_positions, dtype=float)
        if positions.size == 0:
            positions = positions.reshape(0, 3)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise StructuralMeshError("Vertex positions must be an (n, 3) array")

        triangles = np.array(self.triangles, dtype=np.int64)
        if triangles.size == 0:
            triangles = triangles.reshape(0, 3)
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise StructuralMeshError("Triangles must be an (m, 3) array of vertex indices")

        n = positions.shape[0]
        bad = np.flatnonzero(np.any((triangles < 0) | (triangles >= n), axis=1))
        if bad.size:
            raise StructuralMeshError(
                f"Triangle {bad[0]} references a vertex outside [0, {n})"
            )
        degenerate = np.flatnonzero(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        )
        if degenerate.size:
            raise StructuralMeshError(
                f"Triangle {degenerate[0]} repeats a vertex index"
            )

        object.__setattr__(self, "vertex_positions", _frozen(positions))
        object.__setattr__(self, "triangles", _frozen(triangles))

    @property
    def n_vertices(self):
        return self.vertex_positions.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def isolated_vertices(self):
        """Indices of vertices not used by any triangle."""
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.reshape(-1)] = True
        return np.flatnonzero(~used)

    def validate(self):
        """Log a warning for isolated vertices and return their indices."""
        isolated = self.isolated_vertices()
        if isolated.size:
            logger.warning(
                "Mesh has %d isolated vertices (first: %s); they get zero area and no neighbours",
                isolated.size, isolated[:5].tolist(),
            )
        return isolated

    def triangle_areas(self):
        """Area of every triangle in mm²."""
        v0 = self.vertex_positions[self.triangles[:, 0]]
        v1 = self.vertex_positions[self.triangles[:, 1]]
        v2 = self.vertex_positions[self.triangles[:, 2]]
        cr = np.cross(v1 - v0, v2 - v0)
        return 0.5 * np.sqrt(np.sum(cr * cr, axis=1))

    def is_planar(self):
        """True when every vertex lies in the z = 0 plane (synthetic grids)."""
        return bool(self.n_vertices) and bool(np.all(self.vertex_positions[:, 2] == 0.0))


class AdjacencyGraph:
    """Undirected vertex graph stored as a binary CSR matrix.

    Neighbour lists are sorted, contain no duplicates and no self-loops.

    Args:
        matrix: Square sparse matrix; any non-zero entry is an edge.
    """

    def __init__(self, matrix):
        matrix = sparse.csr_matrix(matrix, dtype=np.int32)
        if matrix.shape[0] != matrix.shape[1]:
            raise ParameterError("Adjacency matrix must be square")
        matrix = sparse.triu(matrix, k=1) + sparse.tril(matrix, k=-1)
        matrix = ((matrix + matrix.T) != 0).astype(np.int8).tocsr()
        matrix.eliminate_zeros()
        matrix.sort_indices()
        self._matrix = matrix

    @classmethod
    def from_edges(cls, n_vertices, edges):
        """Build a graph from an iterable of (i, j) vertex pairs."""
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        data = np.ones(edges.shape[0], dtype=np.int8)
        return cls(sparse.coo_matrix((data, (edges[:, 0], edges[:, 1])),
                                     shape=(n_vertices, n_vertices)))

    @property
    def n_vertices(self):
        return self._matrix.shape[0]

    @property
    def n_edges(self):
        return self._matrix.nnz // 2

    def neighbors(self, vertex):
        """Sorted neighbour indices of one vertex."""
        m = self._matrix
        return m.indices[m.indptr[vertex]:m.indptr[vertex + 1]]

    def degrees(self):
        return np.diff(self._matrix.indptr)

    def edges(self):
        """(n_edges, 2) array of undirected edges with i < j, sorted."""
        upper = sparse.triu(self._matrix, k=1, format="coo")
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack((upper.row[order], upper.col[order])).astype(np.int64)

    def has_edge(self, i, j):
        return bool(self._matrix[i, j])

    def to_sparse(self):
        return self._matrix.copy()

    def subgraph(self, mask):
        """Graph induced by the vertices where ``mask`` is True, renumbered."""
        keep = np.flatnonzero(np.asarray(mask, dtype=bool))
        return AdjacencyGraph(self._matrix[keep][:, keep])

    def components(self):
        """Connected component label of every vertex."""
        _, labels = connected_components(self._matrix, directed=False)
        return labels

    def is_connected(self):
        if self.n_vertices == 0:
            return True
        n_components, _ = connected_components(self._matrix, directed=False)
        return n_components == 1

    def is_connected_subset(self, members):
        """True when ``members`` induce a connected subgraph."""
        members = np.asarray(members, dtype=np.int64)
        if members.size <= 1:
            return True
        sub = self._matrix[members][:, members]
        n_components, _ = connected_components(sub, directed=False)
        return n_components == 1

    def __eq__(self, other):
        if not isinstance(other, AdjacencyGraph):
            return NotImplemented
        if other.n_vertices != self.n_vertices:
            return False
        return (self._matrix != other._matrix).nnz == 0

    def __repr__(self):
        return f"AdjacencyGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


def build_adjacency(mesh):
    """Edge graph of a triangulation.

    Args:
        mesh (SurfaceMesh): Input mesh.

    Returns:
        AdjacencyGraph: Vertices are adjacent when they share a triangle edge.
    """
    t = mesh.triangles
    n = mesh.n_vertices
    i = np.column_stack((t[:, 0], t[:, 1], t[:, 2])).reshape(-1)
    j = np.column_stack((t[:, 1], t[:, 2], t[:, 0])).reshape(-1)
    data = np.ones(i.shape, dtype=np.int8)
    return AdjacencyGraph(sparse.coo_matrix((data, (i, j)), shape=(n, n)))


def vertex_areas(mesh):
    """Area associated to each vertex: one third of its incident triangles.

    Args:
        mesh (SurfaceMesh): Input mesh.

    Returns:
        np.ndarray: Per-vertex area in mm²; isolated vertices get 0.
    """
    area3 = np.repeat(mesh.triangle_areas()[:, np.newaxis], 3, axis=1)
    return np.bincount(mesh.triangles.reshape(-1), area3.reshape(-1),
                       minlength=mesh.n_vertices) / 3.0


def induced_submesh(mesh, mask):
    """Restrict a mesh to the vertices selected by a mask.

    Only triangles whose three vertices are kept survive.

    Args:
        mesh (SurfaceMesh): Input mesh.
        mask (array-like of bool): One entry per vertex, True to keep.

    Returns:
        tuple: (submesh, old_to_new) where ``old_to_new[v]`` is the new index
        of vertex ``v`` or -1 when it was dropped.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.n_vertices,):
        raise ParameterError(
            f"Mask has {mask.size} entries, mesh has {mesh.n_vertices} vertices"
        )
    if not mask.any():
        raise EmptyDomainError("Mask excludes every vertex")

    old_to_new = np.full(mesh.n_vertices, -1, dtype=np.int64)
    old_to_new[mask] = np.arange(int(mask.sum()))
    keep_tria = np.all(mask[mesh.triangles], axis=1)
    sub = SurfaceMesh(mesh.vertex_positions[mask], old_to_new[mesh.triangles[keep_tria]])
    return sub, old_to_new
