"""Particle weight utilities."""

from __future__ import annotations

import numpy as np


class FilterDivergenceError(RuntimeError):
    """All particle weights vanished or became non-finite."""


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """Max-shifted exponentiation and normalization of log-weights."""
    log_w = np.asarray(log_w, dtype=float)
    top = np.max(log_w)
    if not np.isfinite(top):
        raise FilterDivergenceError("no particle has finite log-weight")
    w = np.exp(log_w - top)
    s = w.sum()
    if not (s > 0 and np.isfinite(s)):
        raise FilterDivergenceError("particle weights sum to zero")
    return w / s


def effective_sample_size(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_resample(w: np.ndarray, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        raise FilterDivergenceError("cannot resample degenerate weights")
    n = w.size if n is None else n
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def log_sum_exp(a, axis=None):
    """``log(sum(exp(a)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    a = np.asarray(a, dtype=float)
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - top), axis=axis, keepdims=True)) + top
    return out.item() if axis is None else np.squeeze(out, axis=axis)
