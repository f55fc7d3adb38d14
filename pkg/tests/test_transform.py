"""Unit tests for tractogram estimation, the logit link and groupwise averaging."""

import numpy as np
import pytest
from logit_parcellation.errors import (CorrespondenceError, EmptyCohortError,
                                       InvalidTrialsError, SpaceMismatchError)
from logit_parcellation.transform import (ConnectivityMatrix, Space, StreamlineCounts,
                                          default_clamp_eps, estimate_tractogram,
                                          groupwise_average, inverse_logit, logit_transform)


def logit_matrix(values):
    return ConnectivityMatrix(np.array(values, dtype=float), Space.LOGIT)


def test_estimate_tractogram():
    """Test that proportions are successes over trials."""
    counts = StreamlineCounts([[5, 10, 0]], 10)
    m = estimate_tractogram(counts)
    assert m.space is Space.PROBABILITY
    np.testing.assert_allclose(m.values, [[0.5, 1.0, 0.0]])


def test_non_positive_trials():
    """Test that zero trials per seed is rejected."""
    with pytest.raises(InvalidTrialsError):
        StreamlineCounts([[0]], 0)


def test_counts_above_trials():
    """Test that more successes than trials is rejected."""
    with pytest.raises(ValueError):
        StreamlineCounts([[11]], 10)


def test_logit_of_half_is_zero():
    """Test the logit of an exact one half."""
    m = logit_transform(ConnectivityMatrix([[0.5]]))
    assert m.values[0, 0] == 0.0
    assert m.space is Space.LOGIT


def test_logit_clamps_extremes():
    """Test that zeros and ones map to finite values symmetric about zero."""
    m = logit_transform(ConnectivityMatrix([[0.0, 1.0]]), clamp_eps=1e-4)
    expected = np.log(1e-4 / (1 - 1e-4))
    np.testing.assert_allclose(m.values, [[expected, -expected]], rtol=1e-12)
    np.testing.assert_allclose(m.values[0, 0], -9.21024, atol=1e-5)


def test_logit_inverse_cycle():
    """Test that the inverse logit undoes the logit inside the clamp range."""
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.99, size=(20, 7))
    back = inverse_logit(logit_transform(ConnectivityMatrix(p), clamp_eps=1e-3))
    np.testing.assert_allclose(back.values, p, rtol=1e-12)


def test_inverse_logit_range():
    """Test that the logistic function maps large logits into [0, 1]."""
    back = inverse_logit(logit_matrix([[-800.0, 0.0, 40.0]]))
    assert np.all((back.values >= 0) & (back.values <= 1))
    assert back.values[0, 1] == 0.5


def test_logit_requires_probability_space():
    """Test that a logit matrix cannot be transformed again."""
    with pytest.raises(SpaceMismatchError):
        logit_transform(logit_matrix([[0.1]]))


def test_probability_range_enforced():
    """Test that probability matrices reject entries outside [0, 1]."""
    with pytest.raises(ValueError):
        ConnectivityMatrix([[1.5]], Space.PROBABILITY)
    with pytest.raises(ValueError):
        ConnectivityMatrix([[np.nan]], Space.PROBABILITY)


def test_default_clamp_eps():
    """Test the clamp margin derived from the number of streamlines."""
    assert default_clamp_eps(5000) == 1e-4
    assert default_clamp_eps(10) == 0.05
    assert default_clamp_eps(None) == 1e-4


def test_groupwise_average():
    """Test the entrywise mean of logit matrices."""
    mean = groupwise_average([logit_matrix([[1.0, -1.0]]), logit_matrix([[3.0, 1.0]])])
    np.testing.assert_allclose(mean.values, [[2.0, 0.0]])
    assert mean.space is Space.LOGIT


def test_groupwise_single_subject_identity():
    """Test that averaging one subject returns it unchanged."""
    rng = np.random.default_rng(1)
    m = logit_matrix(rng.normal(size=(6, 4)))
    np.testing.assert_array_equal(groupwise_average([m]).values, m.values)


def test_groupwise_order_invariance():
    """Test that subject order changes the mean by rounding only."""
    rng = np.random.default_rng(2)
    subjects = [logit_matrix(rng.normal(0, 3, size=(15, 8))) for _ in range(7)]
    a = groupwise_average(subjects)
    b = groupwise_average(subjects[::-1])
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_groupwise_errors():
    """Test empty cohorts, shape mismatches and probability inputs."""
    with pytest.raises(EmptyCohortError):
        groupwise_average([])
    with pytest.raises(CorrespondenceError):
        groupwise_average([logit_matrix(np.zeros((3, 2))), logit_matrix(np.zeros((4, 2)))])
    with pytest.raises(SpaceMismatchError):
        groupwise_average([ConnectivityMatrix([[0.5]], Space.PROBABILITY)])


def test_select_rows():
    """Test row selection keeps the space."""
    m = logit_matrix([[1.0], [2.0], [3.0]])
    sub = m.select_rows(np.array([0, 2]))
    np.testing.assert_array_equal(sub.values, [[1.0], [3.0]])
    assert sub.space is Space.LOGIT
