"""Reference implementations used to validate the particle IMM.

``imm_kalman_bank`` is the textbook interacting-multiple-model filter for a
linear-Gaussian near-constant-velocity target with directly observed
position: per-mode Kalman filters, mixing by the Markov chain, moment-matched
merging. ``imm_particle_toy`` runs the same model with the particle machinery
of :mod:`mpslam.slam_core` (per-particle modes, the same prediction routine,
systematic resampling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .resampling import normalize_log_weights, systematic_resample
from .slam_core import AgentBelief, ModeModel, predict_agent


@dataclass
class ToyModel:
    transition: np.ndarray  # (Q, Q), row = previous mode
    sigma_w: np.ndarray  # (Q,)
    sigma_v: float  # position measurement noise std
    dt: float = 1.0
    x0: tuple = (0.0, 0.0)  # prior mean (position, velocity)
    prior_std: tuple = (0.05, 0.02)

    def mode_model(self) -> ModeModel:
        return ModeModel(np.asarray(self.transition, float), np.asarray(self.sigma_w, float), self.dt)


def cv_matrices(dt: float, sigma_w: float):
    """1-D transition and white-acceleration noise covariance of the CV model."""
    F = np.array([[1.0, dt], [0.0, 1.0]])
    G = np.array([[0.5 * dt * dt], [dt]])
    return F, sigma_w**2 * (G @ G.T)


def simulate_toy(model: ToyModel, true_modes, rng: np.random.Generator):
    """Positions and measurements of a 1-D target following ``true_modes`` (0-based)."""
    x = np.array(model.x0, dtype=float)
    xs, zs = [], []
    for q in true_modes:
        F, _ = cv_matrices(model.dt, model.sigma_w[q])
        a = model.sigma_w[q] * rng.standard_normal()
        x = F @ x + np.array([0.5 * model.dt**2, model.dt]) * a
        xs.append(x.copy())
        zs.append(x[0] + model.sigma_v * rng.standard_normal())
    return np.array(xs), np.array(zs)


def imm_kalman_bank(z, model: ToyModel, mode_prior=None):
    """Per-step posterior mode probabilities and merged state means."""
    T = np.asarray(model.transition, float)
    nq = T.shape[0]
    mu = np.full(nq, 1.0 / nq) if mode_prior is None else np.asarray(mode_prior, float)
    x0 = np.asarray(model.x0, float)
    P0 = np.diag(np.square(model.prior_std))
    xs = [x0.copy() for _ in range(nq)]
    Ps = [P0.copy() for _ in range(nq)]
    H = np.array([[1.0, 0.0]])
    R = model.sigma_v**2
    out_mu, out_x = [], []
    for zn in z:
        # mixing
        c = T.T @ mu  # predicted mode probabilities
        w = T * mu[:, None] / np.where(c > 0, c, 1.0)[None, :]  # w[i, j] = P(prev i | next j)
        xm, Pm = [], []
        for j in range(nq):
            xj = sum(w[i, j] * xs[i] for i in range(nq))
            Pj = sum(w[i, j] * (Ps[i] + np.outer(xs[i] - xj, xs[i] - xj)) for i in range(nq))
            xm.append(xj)
            Pm.append(Pj)
        # mode-matched filtering
        lik = np.empty(nq)
        for j in range(nq):
            F, Qn = cv_matrices(model.dt, model.sigma_w[j])
            xp = F @ xm[j]
            Pp = F @ Pm[j] @ F.T + Qn
            S = float((H @ Pp @ H.T)[0, 0]) + R
            K = (Pp @ H.T).ravel() / S
            r = zn - xp[0]
            xs[j] = xp + K * r
            Ps[j] = Pp - np.outer(K, K) * S
            lik[j] = np.exp(-0.5 * r * r / S) / np.sqrt(2 * np.pi * S)
        mu = c * lik
        mu = mu / mu.sum()
        out_mu.append(mu.copy())
        out_x.append(sum(mu[j] * xs[j] for j in range(nq)))
    return np.array(out_mu), np.array(out_x)


def imm_particle_toy(z, model: ToyModel, n: int, rng: np.random.Generator, mode_prior=None):
    """Particle IMM on the toy model; returns per-step mode pmfs and means."""
    nq = len(model.sigma_w)
    prior = np.full(nq, 1.0 / nq) if mode_prior is None else np.asarray(mode_prior, float)
    pos = model.x0[0] + model.prior_std[0] * rng.standard_normal((n, 1))
    vel = model.x0[1] + model.prior_std[1] * rng.standard_normal((n, 1))
    mode = systematic_resample(prior, rng, n)
    agent = AgentBelief(pos, vel, mode, np.full(n, 1.0 / n))
    mm = model.mode_model()
    out_mu, out_x = [], []
    for zn in z:
        agent = predict_agent(agent, mm, rng)
        logw = -0.5 * ((zn - agent.pos[:, 0]) / model.sigma_v) ** 2
        agent.w = normalize_log_weights(logw)
        out_mu.append(np.bincount(agent.mode, weights=agent.w, minlength=nq))
        out_x.append(agent.w @ np.column_stack((agent.pos[:, 0], agent.vel[:, 0])))
        idx = systematic_resample(agent.w, rng)
        agent = AgentBelief(agent.pos[idx], agent.vel[idx], agent.mode[idx], np.full(n, 1.0 / n))
    return np.array(out_mu), np.array(out_x)


def total_variation(p, q) -> np.ndarray:
    """Row-wise total-variation distance between pmfs."""
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


# ---------------------------------------------------------------------------
# on-demand checks (also exposed through the command line)


def check_da(seed: int = 0, n: int = 200):
    from .association import AssociationWeights, enumerate_da_oracle, spa_da

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        K, M = (1, int(rng.integers(1, 6))) if rng.random() < 0.5 else (int(rng.integers(1, 6)), 1)
        w = AssociationWeights(rng.uniform(0.05, 3.0, (K, M + 1)), rng.uniform(0.05, 3.0, M))
        b = spa_da(w, tol=1e-13)
        o = enumerate_da_oracle(w)
        worst = max(worst, float(np.abs(b.p_c - o.p_c).max()), float(np.abs(b.p_b - o.p_b).max()))
    return worst <= 1e-9, f"max tree-case deviation {worst:.2e} over {n} instances"


def check_ospa(seed: int = 0, n: int = 500):
    from .metrics import ospa, ospa_bruteforce

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        x = rng.uniform(0, 3, (int(rng.integers(0, 7)), 2))
        y = rng.uniform(0, 3, (int(rng.integers(0, 7)), 2))
        worst = max(worst, abs(ospa(x, y) - ospa_bruteforce(x, y)))
    return worst <= 1e-12, f"max matching vs enumeration gap {worst:.2e} over {n} pairs"


def default_toy_model() -> ToyModel:
    return ToyModel(np.array([[0.99, 0.01], [0.01, 0.99]]), np.array([0.0032, 0.01]), sigma_v=0.01)


def default_toy_modes() -> list[int]:
    return [0] * 30 + [1] * 15 + [0] * 55


def check_imm(seed: int = 0, n: int = 100_000):
    model = default_toy_model()
    rng = np.random.default_rng(seed)
    _, z = simulate_toy(model, default_toy_modes(), rng)
    kf, _ = imm_kalman_bank(z, model)
    pf, _ = imm_particle_toy(z, model, n, rng)
    tv = float(total_variation(kf, pf).mean())
    return tv <= 0.05, f"mean total variation {tv:.4f} over {len(z)} steps"


CHECKS = {"da": check_da, "ospa": check_ospa, "imm": check_imm}
