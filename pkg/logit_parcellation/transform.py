"""Tractogram estimation and the logit link.

Streamline counts become Bernoulli-parameter tractograms; the logit maps
them into a Euclidean space where subject effects are additive and can be
averaged away.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import (CorrespondenceError, EmptyCohortError, InvalidTrialsError,
                     ParameterError, SpaceMismatchError)

logger = logging.getLogger(__name__)

DEFAULT_CLAMP_EPS = 1e-4


class Space(enum.IntEnum):
    """Which space the entries of a connectivity matrix live in."""

    PROBABILITY = 0
    LOGIT = 1


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """Dense seeds × targets matrix of tractograms.

    Attributes:
        values: (n_seeds, n_targets) float64 array, read-only.
        space: Space of the entries.
    """

    values: np.ndarray
    space: Space = Space.PROBABILITY

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ParameterError("Connectivity matrix must be two-dimensional")
        space = Space(self.space)
        if space is Space.PROBABILITY:
            if values.size and (np.any(~(values >= 0.0)) or np.any(~(values <= 1.0))):
                raise ParameterError("Probability-space entries must lie in [0, 1]")
        elif not np.all(np.isfinite(values)):
            raise ParameterError("Logit-space entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "space", space)

    @property
    def n_seeds(self):
        return self.values.shape[0]

    @property
    def n_targets(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def select_rows(self, rows):
        """Matrix restricted to the given seed rows (mask or index array)."""
        return ConnectivityMatrix(self.values[rows], self.space)


@dataclass(frozen=True, eq=False)
class StreamlineCounts:
    """Streamline visit counts from a fixed number of trials per seed.

    Attributes:
        successes: (n_seeds, n_targets) non-negative integer counts.
        trials_per_seed: Number of streamlines N launched from each seed.
    """

    successes: np.ndarray
    trials_per_seed: int

    def __post_init__(self):
        if int(self.trials_per_seed) <= 0:
            raise InvalidTrialsError(
                f"Trials per seed must be positive, got {self.trials_per_seed}"
            )
        successes = np.array(self.successes)
        if successes.ndim != 2:
            raise ParameterError("Streamline counts must be two-dimensional")
        if not np.issubdtype(successes.dtype, np.integer):
            if not np.all(successes == np.round(successes)):
                raise ParameterError("Streamline counts must be integers")
            successes = successes.astype(np.int64)
        if np.any(successes < 0) or np.any(successes > self.trials_per_seed):
            raise ParameterError(
                f"Streamline counts must lie in [0, {self.trials_per_seed}]"
            )
        successes.setflags(write=False)
        object.__setattr__(self, "successes", successes)
        object.__setattr__(self, "trials_per_seed", int(self.trials_per_seed))


def default_clamp_eps(trials_per_seed=None):
    """Half the smallest observable non-zero proportion, or 1e-4 without N."""
    if trials_per_seed is not None and trials_per_seed >= 2:
        return 1.0 / (2.0 * trials_per_seed)
    return DEFAULT_CLAMP_EPS


def estimate_tractogram(counts):
    """Estimate connection probabilities as proportions of successful trials.

    Args:
        counts (StreamlineCounts): Visit counts.

    Returns:
        ConnectivityMatrix: Probability-space tractograms.
    """
    return ConnectivityMatrix(counts.successes / counts.trials_per_seed, Space.PROBABILITY)


def logit_transform(m, clamp_eps=DEFAULT_CLAMP_EPS):
    """Map probability tractograms into logit space.

    Entries are clipped to [clamp_eps, 1 - clamp_eps] first so that exact
    zeros and ones stay finite.

    Args:
        m (ConnectivityMatrix): Probability-space matrix.
        clamp_eps (float): Clipping margin in (0, 0.5).

    Returns:
        ConnectivityMatrix: Logit-space matrix.
    """
    _require_space(m, Space.PROBABILITY)
    if not 0.0 < clamp_eps < 0.5:
        raise ParameterError(f"clamp_eps must lie in (0, 0.5), got {clamp_eps}")
    clipped = np.clip(m.values, clamp_eps, 1.0 - clamp_eps)
    return ConnectivityMatrix(logit(clipped), Space.LOGIT)


def inverse_logit(m):
    """Map logit tractograms back to probabilities with the logistic function."""
    _require_space(m, Space.LOGIT)
    return ConnectivityMatrix(expit(m.values), Space.PROBABILITY)


def groupwise_average(per_subject):
    """Average logit tractograms across subjects.

    Sums are accumulated in extended precision in list order, so a given
    subject ordering always gives bit-identical results.

    Args:
        per_subject (list of ConnectivityMatrix): Logit matrices with seed
            rows corresponding across subjects.

    Returns:
        ConnectivityMatrix: Entrywise mean, in logit space.
    """
    per_subject = list(per_subject)
    if not per_subject:
        raise EmptyCohortError("Cannot average an empty cohort")
    shape = per_subject[0].shape
    acc = np.zeros(shape, dtype=np.longdouble)
    for index, m in enumerate(per_subject):
        _require_space(m, Space.LOGIT)
        if m.shape != shape:
            raise CorrespondenceError(
                f"Subject {index} has shape {m.shape}, expected {shape}"
            )
        acc += m.values
    mean = acc / len(per_subject)
    logger.debug("Averaged %d subjects of shape %s", len(per_subject), shape)
    return ConnectivityMatrix(mean.astype(np.float64), Space.LOGIT)


def _require_space(m, space):
    if m.space is not space:
        raise SpaceMismatchError(
            f"Expected a {space.name.lower()}-space matrix, got {m.space.name.lower()}"
        )
