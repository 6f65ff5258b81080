import numpy as np
import pytest

from mpslam.oracles import (
    ToyModel,
    default_toy_model,
    imm_kalman_bank,
    imm_particle_toy,
    simulate_toy,
    total_variation,
)


def test_single_mode_bank_is_kalman_filter():
    # with one mode the bank reduces to a plain Kalman filter; compare with a
    # scalar-recursion implementation
    model = ToyModel(np.array([[1.0]]), np.array([0.01]), sigma_v=0.05)
    rng = np.random.default_rng(0)
    _, z = simulate_toy(model, [0] * 20, rng)
    mu, x = imm_kalman_bank(z, model)
    np.testing.assert_array_equal(mu, 1.0)
    m = np.zeros(2)
    P = np.diag([0.05**2, 0.02**2])
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    Qn = 0.01**2 * np.array([[0.25, 0.5], [0.5, 1.0]])
    for k, zn in enumerate(z):
        m, P = F @ m, F @ P @ F.T + Qn
        S = P[0, 0] + 0.05**2
        K = P[:, 0] / S
        m = m + K * (zn - m[0])
        P = P - np.outer(K, P[0])
        np.testing.assert_allclose(x[k], m, atol=1e-12)


def test_bank_pmfs_are_distributions():
    model = default_toy_model()
    _, z = simulate_toy(model, [0] * 10 + [1] * 10, np.random.default_rng(1))
    mu, _ = imm_kalman_bank(z, model)
    np.testing.assert_allclose(mu.sum(1), 1.0, atol=1e-12)


def test_particle_toy_tracks_bank_small():
    model = default_toy_model()
    rng = np.random.default_rng(2)
    _, z = simulate_toy(model, [0] * 20 + [1] * 10 + [0] * 10, rng)
    kf, xk = imm_kalman_bank(z, model)
    pf, xp = imm_particle_toy(z, model, 20_000, rng)
    assert total_variation(kf, pf).mean() < 0.05
    np.testing.assert_allclose(xp[:, 0], xk[:, 0], atol=5e-3)


def test_total_variation():
    assert total_variation([1, 0], [0, 1]) == 1.0
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
    np.testing.assert_allclose(total_variation([[0.2, 0.8]], [[0.4, 0.6]]), [0.2])
