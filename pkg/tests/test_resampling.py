import numpy as np
import pytest

from mpslam.resampling import (
    FilterDivergenceError,
    effective_sample_size,
    log_sum_exp,
    normalize_log_weights,
    systematic_resample,
)


def test_ess_hand_value():
    assert effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(8 / 3, abs=1e-15)


def test_uniform_weights_keep_multiset():
    rng = np.random.default_rng(0)
    idx = systematic_resample(np.full(10, 0.1), rng)
    np.testing.assert_array_equal(np.sort(idx), np.arange(10))


def test_single_heavy_particle():
    rng = np.random.default_rng(0)
    idx = systematic_resample(np.array([0.0, 1.0, 0.0, 0.0]), rng)
    np.testing.assert_array_equal(idx, [1, 1, 1, 1])


def test_resample_counts_within_one():
    rng = np.random.default_rng(3)
    w = rng.random(50)
    w /= w.sum()
    counts = np.bincount(systematic_resample(w, rng, 1000), minlength=50)
    assert np.all(np.abs(counts - 1000 * w) < 1 + 1e-9)


def test_degenerate_weights_raise():
    rng = np.random.default_rng(0)
    with pytest.raises(FilterDivergenceError):
        systematic_resample(np.zeros(3), rng)
    with pytest.raises(FilterDivergenceError):
        normalize_log_weights(np.full(3, -np.inf))


def test_normalize_log_weights_shift():
    w = normalize_log_weights(np.array([1000.0, 1000.0 + np.log(3.0)]))
    np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-15)


def test_log_sum_exp():
    a = np.log(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert log_sum_exp(a) == pytest.approx(np.log(10.0))
    np.testing.assert_allclose(log_sum_exp(a, axis=1), np.log([3.0, 7.0]))
    np.testing.assert_array_equal(log_sum_exp(np.full((2, 3), -np.inf), axis=0), [-np.inf] * 3)
