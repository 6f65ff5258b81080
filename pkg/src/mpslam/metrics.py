"""Agent RMSE, OSPA / MOSPA mapping error and mode-belief averages."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 1.0
    order: float = 1.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("OSPA cutoff must be positive")
        if not self.order >= 1:
            raise ValueError("OSPA order must be >= 1")


def position_errors(estimates, truth) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    return np.linalg.norm(est - tru, axis=-1)


def rmse(estimates, truth):
    """Per-step errors and RMSE across runs.

    ``estimates`` and ``truth`` are ``(T, D)`` for one run or ``(R, T, D)``
    for several. Returns ``(errors, per_step_rmse)`` with ``errors`` of shape
    ``(R, T)`` and ``per_step_rmse = sqrt(mean_r errors**2)``.
    """
    err = position_errors(estimates, truth)
    err = np.atleast_2d(err)
    return err, np.sqrt(np.mean(err**2, axis=0))


def _as_set(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


def _clipped_costs(x: np.ndarray, y: np.ndarray, params: OspaParams) -> np.ndarray:
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    return np.minimum(d, params.cutoff) ** params.order


def ospa(est_set, true_set, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two finite point sets (0 for two empty sets)."""
    x, y = _as_set(est_set), _as_set(true_set)
    if len(x) > len(y):
        x, y = y, x
    m, n = len(x), len(y)
    if n == 0:
        return 0.0
    c, p = params.cutoff, params.order
    total = (n - m) * c**p
    if m:
        cost = _clipped_costs(x, y, params)
        rows, cols = linear_sum_assignment(cost)
        total += cost[rows, cols].sum()
    return float((total / n) ** (1.0 / p))


def ospa_bruteforce(est_set, true_set, params: OspaParams = OspaParams()) -> float:
    """OSPA by enumerating every injection of the smaller set into the larger."""
    x, y = _as_set(est_set), _as_set(true_set)
    if len(x) > len(y):
        x, y = y, x
    m, n = len(x), len(y)
    if n == 0:
        return 0.0
    c, p = params.cutoff, params.order
    cost = _clipped_costs(x, y, params)
    best = min(
        (sum(cost[i, j] for i, j in enumerate(perm)) for perm in itertools.permutations(range(n), m)),
        default=0.0,
    )
    return float(((best + (n - m) * c**p) / n) ** (1.0 / p))


def mospa(per_run_ospa) -> np.ndarray:
    """Per-step mean OSPA over runs; input ``(R, T)``."""
    a = np.asarray(per_run_ospa, dtype=float)
    return np.atleast_2d(a).mean(axis=0)


def average_mode_belief(per_run_pmfs) -> np.ndarray:
    """Per-step mean mode pmf over runs; input ``(R, T, Q)`` or ``(T, Q)``."""
    a = np.asarray(per_run_pmfs, dtype=float)
    if a.ndim == 2:
        a = a[None]
    mean = a.mean(axis=0)
    return mean / mean.sum(axis=-1, keepdims=True)


def window_mean(values, windows) -> float:
    """Mean of ``values[n]`` over ``start < n <= end`` for every window."""
    values = np.asarray(values, dtype=float)
    idx = np.concatenate([np.arange(s + 1, e + 1) for s, e in windows]) if windows else np.zeros(0, int)
    return float(values[idx].mean()) if idx.size else float("nan")


def straight_segments(num_steps: int, turn_windows) -> list[tuple[int, int]]:
    """Complement of the turn windows, in the same ``(start, end]`` convention."""
    segs, prev = [], -1
    for s, e in sorted(turn_windows):
        if s > prev:
            segs.append((prev, s))
        prev = e
    if prev < num_steps - 1:
        segs.append((prev, num_steps - 1))
    return segs
