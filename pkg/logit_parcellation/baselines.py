"""Random parcellations giving the chance level of the adjusted Rand index.

Two generators are provided: homogeneous random parcellations grown from
random start vertices, and random hierarchical merging of a fine random
parcellation, which mimics what an uninformed agglomerative clustering
would produce.
"""

import logging

import numpy as np

from .cluster import Dendrogram, Merge, Parcellation, cut_by_count, expand_parcellation
from .errors import ConstraintError, CorrespondenceError, ParameterError, UnreachableVertexError
from .metrics import adjusted_rand_index
from .utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

MODES = ("homogeneous", "hierarchical")
DEFAULT_INITIAL_PARCELS = 300

# sub-stream tags so the generators never share a random stream
_HOMOGENEOUS, _INITIAL, _MERGE = 0, 1, 2


def homogeneous_random_parcellation(graph, n_parcels, seed):
    """Grow ``n_parcels`` connected parcels from random start vertices.

    At every step a (parcel, unassigned neighbouring vertex) adjacency is
    drawn uniformly and the vertex joins the parcel.

    Args:
        graph (AdjacencyGraph): Connected vertex graph.
        n_parcels (int): Number of parcels, 1..n_vertices.
        seed (int): RNG seed.

    Returns:
        Parcellation: Connected, non-empty parcels.
    """
    n = graph.n_vertices
    if not 1 <= n_parcels <= n:
        raise ParameterError(f"n_parcels must lie in [1, {n}], got {n_parcels}")
    if not graph.is_connected():
        raise UnreachableVertexError("Graph is disconnected; some vertices cannot be reached")

    rng = make_rng(seed)
    starts = rng.choice(n, size=n_parcels, replace=False)
    labels = np.full(n, -1, dtype=np.int64)
    labels[starts] = np.arange(n_parcels)

    frontier = []
    queued = set()

    def extend(parcel, vertex):
        for u in graph.neighbors(vertex).tolist():
            if labels[u] < 0 and (parcel, u) not in queued:
                queued.add((parcel, u))
                frontier.append((parcel, u))

    for parcel, start in enumerate(starts.tolist()):
        extend(parcel, start)

    remaining = n - n_parcels
    while remaining:
        # drawing stale entries and skipping them keeps the draw uniform over live ones
        i = int(rng.integers(len(frontier)))
        parcel, vertex = frontier[i]
        frontier[i] = frontier[-1]
        frontier.pop()
        if labels[vertex] >= 0:
            continue
        labels[vertex] = parcel
        remaining -= 1
        extend(parcel, vertex)
    return Parcellation.from_labels(labels)


def random_hierarchical_merge(initial, graph, seed, adjacency_constrained=True):
    """Merge random pairs of parcels until one remains.

    Args:
        initial (Parcellation): Starting parcels; they are the leaves.
        graph (AdjacencyGraph): Vertex graph used to derive parcel adjacency.
        seed (int): RNG seed.
        adjacency_constrained (bool): Only merge spatially adjacent parcels.

    Returns:
        Dendrogram: Over the initial parcels, with ordinal heights 1, 2, 3, ...
    """
    if graph.n_vertices != initial.n_seeds:
        raise CorrespondenceError(
            f"Graph has {graph.n_vertices} vertices, parcellation {initial.n_seeds} seeds"
        )
    rng = make_rng(seed)
    n_leaves = initial.n_parcels
    sizes = {i: 1 for i in range(n_leaves)}

    edges = graph.edges()
    a = initial.labels[edges[:, 0]]
    b = initial.labels[edges[:, 1]]
    across = a != b
    pairs = {(int(min(x, y)), int(max(x, y))) for x, y in zip(a[across], b[across])}
    neighbors = {i: set() for i in range(n_leaves)}
    for x, y in pairs:
        neighbors[x].add(y)
        neighbors[y].add(x)

    merges = []
    next_id = n_leaves
    for step in range(n_leaves - 1):
        if adjacency_constrained:
            candidates = sorted(pairs)
            if not candidates:
                raise ConstraintError(
                    f"No adjacent parcels left after {step} merges; the graph is disconnected"
                )
            left, right = candidates[int(rng.integers(len(candidates)))]
        else:
            active = sorted(sizes)
            i, j = rng.choice(len(active), size=2, replace=False)
            left, right = sorted((active[i], active[j]))

        new = next_id
        next_id += 1
        sizes[new] = sizes.pop(left) + sizes.pop(right)
        merges.append(Merge(left, right, float(step + 1), sizes[new]))

        adjacent = (neighbors.pop(left) | neighbors.pop(right)) - {left, right}
        pairs = {pair for pair in pairs if left not in pair and right not in pair}
        for x in adjacent:
            neighbors[x] -= {left, right}
            neighbors[x].add(new)
            pairs.add((x, new))
        neighbors[new] = adjacent
    return Dendrogram(n_leaves, merges, n_constrained=0)


def baseline_curve(graph, n_trials, k_values, mode, seed,
                   n_initial=DEFAULT_INITIAL_PARCELS, adjacency_constrained=True):
    """Chance-level ARI per granularity.

    ``n_trials`` random parcellations are generated per k; trials are
    compared in disjoint consecutive pairs (0, 1), (2, 3), ... Every trial
    draws from its own sub-stream of ``seed``.

    Args:
        graph (AdjacencyGraph): Connected vertex graph.
        n_trials (int): Random parcellations per k, at least 2.
        k_values (iterable of int): Parcel counts.
        mode (str): 'homogeneous' or 'hierarchical'.
        seed (int): Master seed.
        n_initial (int): Initial parcels for hierarchical mode, clipped to
            the number of vertices.
        adjacency_constrained (bool): Restrict hierarchical merges to
            adjacent parcels.

    Returns:
        list of tuple: (k, mode, mean_ari, std_ari, n_trials) per k.
    """
    if n_trials < 2:
        raise ParameterError(f"n_trials must be at least 2, got {n_trials}")
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    k_values = [int(k) for k in k_values]
    n = graph.n_vertices
    n_initial = min(n_initial, n)
    limit = n if mode == "homogeneous" else n_initial
    for k in k_values:
        if not 1 <= k <= limit:
            raise ParameterError(f"k must lie in [1, {limit}] for {mode} mode, got {k}")

    if mode == "homogeneous":
        cuts = {k: [homogeneous_random_parcellation(graph, k, derive_seed(seed, _HOMOGENEOUS, trial, k))
                    for trial in range(n_trials)]
                for k in k_values}
    else:
        cuts = {k: [] for k in k_values}
        for trial in range(n_trials):
            initial = homogeneous_random_parcellation(graph, n_initial, derive_seed(seed, _INITIAL, trial))
            dendro = random_hierarchical_merge(initial, graph, derive_seed(seed, _MERGE, trial),
                                               adjacency_constrained)
            for k in k_values:
                cuts[k].append(expand_parcellation(cut_by_count(dendro, k), initial))

    rows = []
    for k in k_values:
        scores = np.array([adjusted_rand_index(cuts[k][i], cuts[k][i + 1])
                           for i in range(0, n_trials - 1, 2)])
        rows.append((k, mode, float(scores.mean()), float(scores.std()), n_trials))
        logger.debug("Baseline %s k=%d: mean ARI %.4f", mode, k, scores.mean())
    return rows
