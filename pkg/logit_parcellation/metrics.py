"""Partition similarity: contingency tables and the adjusted Rand index."""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from .cluster import Parcellation, cut_by_count
from .errors import CorrespondenceError, ParameterError
from .transform import Space, _require_space

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Overlap counts between the parcels of two partitions.

    Attributes:
        counts: (n_parcels_p, n_parcels_q) int64 matrix.
    """

    counts: np.ndarray

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)

    @property
    def col_sums(self):
        return self.counts.sum(axis=0)

    @property
    def total(self):
        return int(self.counts.sum())


def _check_pair(p, q):
    if p.n_seeds != q.n_seeds:
        raise CorrespondenceError(
            f"Parcellations cover {p.n_seeds} and {q.n_seeds} seeds"
        )


def contingency(p, q):
    """Count the seeds in every (parcel of p, parcel of q) pair.

    Args:
        p (Parcellation): First partition.
        q (Parcellation): Second partition of the same seeds.

    Returns:
        ContingencyTable: ``counts[i, j]`` seeds labelled i in p and j in q.
    """
    _check_pair(p, q)
    # coo_matrix sums duplicates, which makes it a fast 2-D histogram
    table = sparse.coo_matrix(
        (np.ones(p.n_seeds, dtype=np.int64), (p.labels, q.labels)),
        shape=(p.n_parcels, q.n_parcels),
        dtype=np.int64,
    ).toarray()
    return ContingencyTable(table)


def _pairs(counts):
    """Sum of C(c, 2) over an integer array, as an exact Python int."""
    counts = np.asarray(counts, dtype=np.int64)
    return int(np.sum(counts * (counts - 1) // 2, dtype=np.int64))


def _same_partition(table):
    nonzero = table.counts > 0
    return bool(np.all(nonzero.sum(axis=0) == 1) and np.all(nonzero.sum(axis=1) == 1))


def adjusted_rand_index(p, q):
    """Adjusted Rand index between two partitions.

    Pair counts are combined with exact integer arithmetic and converted to
    float once. When the chance-corrected denominator vanishes (both
    partitions all singletons, or both a single parcel) the index is 1 for
    equal partitions and 0 otherwise.

    Args:
        p (Parcellation): First partition.
        q (Parcellation): Second partition of the same seeds.

    Returns:
        float: ARI in [-1, 1].
    """
    table = contingency(p, q)
    n = table.total
    total_pairs = n * (n - 1) // 2
    index = _pairs(table.counts)
    sum_a = _pairs(table.row_sums)
    sum_b = _pairs(table.col_sums)
    # (index - expected) / (max - expected), both sides scaled by 2 * total_pairs
    numerator = 2 * (index * total_pairs - sum_a * sum_b)
    denominator = (sum_a + sum_b) * total_pairs - 2 * sum_a * sum_b
    if denominator == 0:
        return 1.0 if _same_partition(table) else 0.0
    return numerator / denominator


def consistency_curve(dendros, k_values):
    """Pairwise ARI between dendrograms cut at each granularity.

    Args:
        dendros (list of Dendrogram): Dendrograms over the same seeds.
        k_values (iterable of int): Parcel counts to cut at.

    Returns:
        list of tuple: (k, index_a, index_b, ari) rows, k-major.
    """
    dendros = list(dendros)
    if len({d.n_leaves for d in dendros}) > 1:
        raise CorrespondenceError("Dendrograms cover different numbers of seeds")
    rows = []
    for k in k_values:
        cuts = [cut_by_count(d, k) for d in dendros]
        for a, b in itertools.combinations(range(len(cuts)), 2):
            rows.append((k, a, b, adjusted_rand_index(cuts[a], cuts[b])))
    return rows


def match_labels(reference, p):
    """Relabel ``p`` so that parcels overlapping most with a reference parcel take its label.

    Uses a maximum-overlap assignment on the contingency table. Parcels of
    ``p`` left unmatched receive the next free labels in order of their
    smallest member.

    Returns:
        np.ndarray: New label per seed (values may exceed p.n_parcels - 1
        when the reference has more parcels).
    """
    table = contingency(reference, p).counts
    ref_idx, p_idx = linear_sum_assignment(table, maximize=True)
    mapping = np.full(p.n_parcels, -1, dtype=np.int64)
    mapping[p_idx] = ref_idx
    next_label = reference.n_parcels
    for label in range(p.n_parcels):
        if mapping[label] < 0:
            mapping[label] = next_label
            next_label += 1
    return mapping[p.labels]


def within_cluster_sse(features, p):
    """Total within-parcel sum of squared deviations in logit space."""
    _require_space(features, Space.LOGIT)
    if p.n_seeds != features.n_seeds:
        raise CorrespondenceError(
            f"Parcellation has {p.n_seeds} seeds, features have {features.n_seeds}"
        )
    if p.n_seeds == 0:
        raise ParameterError("Empty parcellation")
    values = features.values
    means = np.zeros((p.n_parcels, values.shape[1]))
    np.add.at(means, p.labels, values)
    means /= p.sizes()[:, None]
    resid = values - means[p.labels]
    return float(np.sum(resid * resid))
