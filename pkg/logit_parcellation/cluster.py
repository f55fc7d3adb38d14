"""Spatially constrained Ward clustering of logit tractograms.

The dendrogram is built in two phases. The constrained phase merges every
cluster whose area is below the minimum size into its closest spatial
neighbour (closest in the Ward sense). The unconstrained phase then runs
textbook Ward agglomeration over the surviving clusters, updating the
dissimilarities with the Lance-Williams recurrence.

Node ids follow the SciPy linkage convention: leaves are 0..n-1 and the
k-th merge creates node n + k.
"""

import heapq
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from .errors import (ConstraintError, CorrespondenceError, DimensionError,
                     EmptyDomainError, ParameterError)
from .transform import Space, _require_space

logger = logging.getLogger(__name__)

SIZE_MODES = ("area", "count")


class Merge(NamedTuple):
    """One merge of the dendrogram; ``left < right`` always."""

    left: int
    right: int
    height: float
    size: int


@dataclass(eq=False)
class Dendrogram:
    """Full merge tree of a clustering run.

    Attributes:
        n_leaves: Number of seeds.
        merges: Merges in the order they were performed.
        n_constrained: How many leading merges came from the minimum-size
            phase; None when unknown (e.g. read back from a file).
    """

    n_leaves: int
    merges: List[Merge] = field(default_factory=list)
    n_constrained: Optional[int] = 0

    def __post_init__(self):
        if self.n_leaves < 1:
            raise ParameterError("A dendrogram needs at least one leaf")
        self.merges = [Merge(int(m[0]), int(m[1]), float(m[2]), int(m[3])) for m in self.merges]
        if len(self.merges) > self.n_leaves - 1:
            raise ParameterError(
                f"{len(self.merges)} merges for {self.n_leaves} leaves"
            )
        sizes = np.ones(self.n_leaves + len(self.merges), dtype=np.int64)
        used = np.zeros(sizes.size, dtype=bool)
        for index, m in enumerate(self.merges):
            node = self.n_leaves + index
            for child in (m.left, m.right):
                if not 0 <= child < node:
                    raise ParameterError(f"Merge {index} references unknown node {child}")
                if used[child]:
                    raise ParameterError(f"Node {child} is merged twice")
                used[child] = True
            if m.left == m.right:
                raise ParameterError(f"Merge {index} joins node {m.left} with itself")
            sizes[node] = sizes[m.left] + sizes[m.right]
            if m.size != sizes[node]:
                raise ParameterError(
                    f"Merge {index} records {m.size} members, children hold {sizes[node]}"
                )

    def __len__(self):
        return len(self.merges)

    @property
    def heights(self):
        return np.array([m.height for m in self.merges], dtype=np.float64)

    def is_complete(self):
        return len(self.merges) == self.n_leaves - 1

    def to_linkage(self):
        """Merges as a SciPy linkage matrix (left, right, height, size)."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges],
                        dtype=np.float64).reshape(-1, 4)


def canonical_labels(raw):
    """Relabel so that labels increase with each parcel's smallest member index."""
    raw = np.asarray(raw).reshape(-1)
    if raw.size == 0:
        return np.zeros(0, dtype=np.int64)
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.reshape(-1)]


@dataclass(frozen=True, eq=False)
class Parcellation:
    """Flat labelling of seeds into parcels 0..n_parcels-1."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels).reshape(-1)
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ParameterError("Parcel labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size:
            present = np.unique(labels)
            if present[0] != 0 or present[-1] != present.size - 1:
                raise ParameterError("Parcel labels must be 0..n_parcels-1 with every value present")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, raw):
        """Build a parcellation from arbitrary label values."""
        return cls(canonical_labels(raw))

    @property
    def n_seeds(self):
        return self.labels.size

    @property
    def n_parcels(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def members(self, label):
        return np.flatnonzero(self.labels == label)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.n_parcels)

    def __eq__(self, other):
        if not isinstance(other, Parcellation):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None

    def __repr__(self):
        return f"Parcellation(n_seeds={self.n_seeds}, n_parcels={self.n_parcels})"


def ward_distance(centroid_a, size_a, centroid_b, size_b):
    """Increase in within-cluster sum of squares caused by merging two clusters.

    Args:
        centroid_a (array-like): Mean logit vector of the first cluster.
        size_a (int): Member count of the first cluster.
        centroid_b (array-like): Mean logit vector of the second cluster.
        size_b (int): Member count of the second cluster.

    Returns:
        float: size_a * size_b / (size_a + size_b) * ||centroid_a - centroid_b||².
    """
    a = np.asarray(centroid_a, dtype=np.float64)
    b = np.asarray(centroid_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"Centroid shapes differ: {a.shape} vs {b.shape}")
    if size_a <= 0 or size_b <= 0:
        raise ParameterError("Cluster sizes must be positive")
    diff = (a - b).reshape(-1)
    return size_a * size_b / (size_a + size_b) * float(diff @ diff)


def lance_williams_update(d_ak, d_bk, d_ab, n_a, n_b, n_k):
    """Ward dissimilarity between cluster K and the union of A and B.

    Works elementwise on arrays, so a whole row of the dissimilarity matrix
    can be updated at once.
    """
    return ((n_a + n_k) * d_ak + (n_b + n_k) * d_bk - n_k * d_ab) / (n_a + n_b + n_k)


class ClusterState:
    """Active clusters of the constrained phase.

    Every cluster keeps the sum of its members' logit rows, its member
    count, its area and the set of spatially adjacent clusters.

    Args:
        features (ConnectivityMatrix): Logit tractograms, one row per seed.
        graph (AdjacencyGraph): Seed adjacency.
        areas (array-like): Per-seed area.
    """

    def __init__(self, features, graph, areas):
        values = features.values
        self.n_leaves = values.shape[0]
        self.sums = {i: values[i] for i in range(self.n_leaves)}
        self.counts = {i: 1 for i in range(self.n_leaves)}
        self.areas = {i: float(a) for i, a in enumerate(areas)}
        self.members = {i: [i] for i in range(self.n_leaves)}
        self.neighbors = {i: set(graph.neighbors(i).tolist()) for i in range(self.n_leaves)}
        self.next_id = self.n_leaves

    def active_ids(self):
        return sorted(self.counts)

    def centroid(self, cid):
        return self.sums[cid] / self.counts[cid]

    def ward(self, a, b):
        return ward_distance(self.centroid(a), self.counts[a], self.centroid(b), self.counts[b])

    def merge(self, a, b):
        """Replace clusters ``a`` and ``b`` by their union; return the new id."""
        new = self.next_id
        self.next_id += 1
        self.sums[new] = self.sums.pop(a) + self.sums.pop(b)
        self.counts[new] = self.counts.pop(a) + self.counts.pop(b)
        self.areas[new] = self.areas.pop(a) + self.areas.pop(b)
        self.members[new] = sorted(self.members.pop(a) + self.members.pop(b))
        adjacent = (self.neighbors.pop(a) | self.neighbors.pop(b)) - {a, b}
        for nb in adjacent:
            self.neighbors[nb] -= {a, b}
            self.neighbors[nb].add(new)
        self.neighbors[new] = adjacent
        return new


def enforce_min_size(state, min_area, allow_disconnected=False):
    """Merge undersized clusters into neighbours until all reach ``min_area``.

    The smallest undersized cluster goes first (ties: lowest id) and joins
    the neighbour with the smallest Ward distance (ties: lowest id). The
    state is updated in place.

    Args:
        state (ClusterState): Clusters to constrain.
        min_area (float): Minimum cluster area.
        allow_disconnected (bool): Leave undersized clusters without
            neighbours in place instead of failing.

    Returns:
        tuple: (state, merges) with the merges in the order performed.
    """
    if min_area < 0:
        raise ParameterError(f"min_area must be non-negative, got {min_area}")
    merges = []
    heap = [(state.areas[cid], cid) for cid in state.active_ids() if state.areas[cid] < min_area]
    heapq.heapify(heap)
    while heap:
        area, cid = heapq.heappop(heap)
        if cid not in state.counts:
            continue
        neighbors = sorted(state.neighbors[cid])
        if not neighbors and len(state.counts) == 1:
            logger.info("Whole domain merged into one cluster of area %.6g", area)
            break
        if not neighbors:
            members = state.members[cid]
            if allow_disconnected:
                logger.warning(
                    "Cluster %d (%d seeds, area %.6g) has no neighbours; left undersized",
                    cid, len(members), area,
                )
                continue
            raise ConstraintError(
                f"Connected component of {len(members)} seeds {members[:10]} has area "
                f"{area:.6g}, below the minimum {min_area:.6g}"
            )
        distances = [state.ward(cid, nb) for nb in neighbors]
        best = int(np.argmin(distances))
        partner = neighbors[best]
        new = state.merge(cid, partner)
        merges.append(Merge(min(cid, partner), max(cid, partner), distances[best], state.counts[new]))
        if state.areas[new] < min_area:
            heapq.heappush(heap, (state.areas[new], new))
    return state, merges


def _nearest(row, node):
    """Closest slot in a dissimilarity row; ties go to the smallest node id."""
    best = row.min()
    if not np.isfinite(best):
        return -1, np.inf
    tied = np.flatnonzero(row == best)
    return int(tied[np.argmin(node[tied])]), best


def _ward_phase(state):
    """Unconstrained Ward agglomeration of the active clusters of ``state``."""
    ids = np.array(state.active_ids(), dtype=np.int64)
    m = ids.size
    if m <= 1:
        return []

    centroids = np.vstack([state.centroid(cid) for cid in ids])
    sizes = np.array([state.counts[cid] for cid in ids], dtype=np.float64)
    weight = sizes[:, None] * sizes[None, :] / (sizes[:, None] + sizes[None, :])
    dist = weight * cdist(centroids, centroids, "sqeuclidean")
    np.fill_diagonal(dist, np.inf)

    node = ids.copy()
    active = np.ones(m, dtype=bool)
    nn = np.empty(m, dtype=np.int64)
    nn_dist = np.empty(m, dtype=np.float64)
    for s in range(m):
        nn[s], nn_dist[s] = _nearest(dist[s], node)

    next_id = state.next_id
    merges = []
    last_height = 0.0
    for _ in range(m - 1):
        live = np.flatnonzero(active)
        best = nn_dist[live].min()
        rows = live[nn_dist[live] == best]
        partners = nn[rows]
        lo = np.minimum(node[rows], node[partners])
        hi = np.maximum(node[rows], node[partners])
        pick = np.lexsort((hi, lo))[0]
        keep, drop = sorted((int(rows[pick]), int(partners[pick])))

        d_ab = dist[keep, drop]
        # rounding in the recurrence can undershoot the previous height by an ulp
        height = max(float(d_ab), last_height)
        last_height = height
        merged_size = sizes[keep] + sizes[drop]
        merges.append(Merge(int(lo[pick]), int(hi[pick]), height, int(merged_size)))

        new_row = lance_williams_update(dist[keep], dist[drop], d_ab,
                                        sizes[keep], sizes[drop], sizes)
        np.maximum(new_row, 0.0, out=new_row)
        active[drop] = False
        new_row[~active] = np.inf
        new_row[keep] = np.inf
        dist[keep, :] = new_row
        dist[:, keep] = new_row
        dist[drop, :] = np.inf
        dist[:, drop] = np.inf
        sizes[keep] = merged_size
        node[keep] = next_id
        next_id += 1

        nn[drop], nn_dist[drop] = -1, np.inf
        stale = active & ((nn == keep) | (nn == drop))
        stale[keep] = True
        closer = active & (new_row < nn_dist)
        nn[closer] = keep
        nn_dist[closer] = new_row[closer]
        for s in np.flatnonzero(stale):
            nn[s], nn_dist[s] = _nearest(dist[s], node)
    return merges


def build_dendrogram(features, graph, areas, min_area, size_mode="area",
                     allow_disconnected=False):
    """Build the full dendrogram of the constrained Ward clustering.

    Args:
        features (ConnectivityMatrix): Logit tractograms, one row per seed.
        graph (AdjacencyGraph): Adjacency of the seeds on the mesh.
        areas (array-like): Per-seed area in mm² (ignored in count mode).
        min_area (float): Minimum size of the finest-level clusters, in mm²
            or, in count mode, in seeds.
        size_mode (str): 'area' or 'count'.
        allow_disconnected (bool): Accept isolated seeds and undersized
            clusters that have no neighbours.

    Returns:
        Dendrogram: n_seeds - 1 merges; the first ``n_constrained`` come
        from the minimum-size phase.
    """
    _require_space(features, Space.LOGIT)
    n = features.n_seeds
    if n == 0:
        raise EmptyDomainError("No seeds to cluster")
    if graph.n_vertices != n:
        raise CorrespondenceError(
            f"Graph has {graph.n_vertices} vertices, features have {n} seeds"
        )
    if size_mode == "count":
        areas = np.ones(n)
    elif size_mode == "area":
        areas = np.asarray(areas, dtype=np.float64).reshape(-1)
        if areas.size != n:
            raise CorrespondenceError(f"{areas.size} areas for {n} seeds")
    else:
        raise ParameterError(f"size_mode must be one of {SIZE_MODES}, got {size_mode!r}")

    isolated = np.flatnonzero(graph.degrees() == 0)
    if n > 1 and isolated.size and not allow_disconnected:
        raise ConstraintError(
            f"{isolated.size} seeds have no neighbours (first: {isolated[:5].tolist()})"
        )

    state = ClusterState(features, graph, areas)
    state, constrained = enforce_min_size(state, min_area, allow_disconnected)
    logger.info("Minimum-size phase: %d merges, %d clusters remain",
                len(constrained), len(state.counts))
    merges = constrained + _ward_phase(state)
    return Dendrogram(n, merges, n_constrained=len(constrained))


def _apply_merges(d, count):
    parent = np.arange(d.n_leaves + count, dtype=np.int64)
    for index, m in enumerate(d.merges[:count]):
        parent[m.left] = d.n_leaves + index
        parent[m.right] = d.n_leaves + index
    while True:
        grand = parent[parent]
        if np.array_equal(grand, parent):
            break
        parent = grand
    return Parcellation(canonical_labels(parent[:d.n_leaves]))


def cut_by_count(d, k):
    """Parcellation with exactly ``k`` parcels, undoing the last k - 1 merges."""
    if not 1 <= k <= d.n_leaves:
        raise ParameterError(f"k must lie in [1, {d.n_leaves}], got {k}")
    count = d.n_leaves - k
    if count > len(d.merges):
        raise ParameterError(f"Dendrogram has only {len(d.merges)} merges, cannot reach k={k}")
    return _apply_merges(d, count)


def cut_by_height(d, h):
    """Parcellation obtained by applying merges up to height ``h``.

    Merges are applied in order until the first one above ``h``, so the
    result always equals ``cut_by_count`` at the induced number of parcels.
    """
    if h < 0:
        raise ParameterError(f"Cut height must be non-negative, got {h}")
    above = np.flatnonzero(d.heights > h)
    count = int(above[0]) if above.size else len(d.merges)
    return _apply_merges(d, count)


def parcel_fingerprint(features, p, label):
    """Connectivity fingerprint of one parcel.

    Args:
        features (ConnectivityMatrix): Logit tractograms.
        p (Parcellation): Parcellation of the same seeds.
        label (int): Parcel id.

    Returns:
        np.ndarray: Inverse logit of the parcel's mean logit vector.
    """
    _require_space(features, Space.LOGIT)
    if p.n_seeds != features.n_seeds:
        raise CorrespondenceError(
            f"Parcellation has {p.n_seeds} seeds, features have {features.n_seeds}"
        )
    if not 0 <= label < p.n_parcels:
        raise ParameterError(f"Unknown parcel label {label}")
    return expit(features.values[p.labels == label].mean(axis=0))


def expand_parcellation(coarse, initial):
    """Seed-level parcellation from a parcellation of ``initial``'s parcels."""
    if coarse.n_seeds != initial.n_parcels:
        raise CorrespondenceError(
            f"Coarse parcellation covers {coarse.n_seeds} parcels, initial has {initial.n_parcels}"
        )
    return Parcellation.from_labels(coarse.labels[initial.labels])
