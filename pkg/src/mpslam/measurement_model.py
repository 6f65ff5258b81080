"""Measurement, detection, clutter and birth models for MPC parameter triples.

A measurement is ``z = (d_hat, phi_hat, u_hat)``: distance, angle of arrival
and normalized amplitude of one extracted multipath component. Only
components with ``u_hat >= gamma`` are ever reported.

Model choices:

* detection: a Rician amplitude with noncentrality ``u`` and unit scale
  crosses the threshold ``gamma``; ``P_d(u) = Q1(u, gamma)``.
* amplitude likelihood: Rician density truncated to ``u_hat >= gamma``.
  Consequently ``P_d(u) * f(u_hat | u)`` is the plain Rician density.
* distance / AoA: Gaussian about the geometric values with standard
  deviations ``sigma_d0 / u_hat`` and ``sigma_phi0 / u_hat``.
* false alarms: uniform distance on ``d_range``, uniform AoA, and a Rayleigh
  amplitude (Rician with ``u = 0``) truncated at ``gamma``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .geometry import range_aoa, wrap_angle

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Measurement:
    distance: float
    aoa: float
    amplitude: float

    def as_array(self) -> np.ndarray:
        return np.array([self.distance, self.aoa, self.amplitude], dtype=float)


@dataclass(frozen=True)
class NoiseParams:
    sigma_d0: float = 0.30
    sigma_phi0: float = 0.15
    gamma: float = 2.0

    def __post_init__(self):
        if min(self.sigma_d0, self.sigma_phi0, self.gamma) <= 0:
            raise ValueError("noise parameters must be strictly positive")


@dataclass(frozen=True)
class FalseAlarmModel:
    mu_fa: float = 1.0
    d_min: float = 0.0
    d_max: float = 30.0

    def __post_init__(self):
        if self.mu_fa < 0:
            raise ValueError("mu_fa must be >= 0")
        if not self.d_min < self.d_max:
            raise ValueError("d_min must be < d_max")


@dataclass(frozen=True)
class BirthModel:
    mu_n: float = 0.05
    center: tuple[float, float] = (0.0, 0.0)
    half_width: float = 15.0
    u_min: float = 0.5
    u_max: float = 40.0

    def __post_init__(self):
        if self.mu_n < 0:
            raise ValueError("mu_n must be >= 0")
        if self.half_width <= 0 or not self.u_min < self.u_max:
            raise ValueError("degenerate birth region")

    @property
    def log_position_density(self) -> float:
        return -math.log((2.0 * self.half_width) ** 2)

    @property
    def log_amplitude_density(self) -> float:
        return -math.log(self.u_max - self.u_min)

    def log_density(self, pos: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Log of the uniform new-feature prior over position and amplitude."""
        pos = np.asarray(pos, dtype=float)
        u = np.asarray(u, dtype=float)
        cx, cy = self.center
        inside = (
            (np.abs(pos[..., 0] - cx) <= self.half_width)
            & (np.abs(pos[..., 1] - cy) <= self.half_width)
            & (u >= self.u_min)
            & (u <= self.u_max)
        )
        val = self.log_position_density + self.log_amplitude_density
        return np.where(inside, val, -np.inf)


# ---------------------------------------------------------------------------
# detection


def marcum_q1(a, b):
    """First-order Marcum Q-function ``Q1(a, b)`` for ``a >= 0``, ``b >= 0``.

    ``Q1(a, b) = P(R > b)`` for a Rician ``R`` with noncentrality ``a`` and
    unit scale, i.e. the survival function of a noncentral chi-square with
    two degrees of freedom at ``b**2``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("Marcum Q1 requires nonnegative arguments")
    return stats.ncx2.sf(b * b, 2, a * a)


def detection_probability(u, gamma: float):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("amplitude must be nonnegative")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    out = np.clip(marcum_q1(u, gamma), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def log_detection_probability(u, gamma: float):
    u = np.asarray(u, dtype=float)
    return stats.ncx2.logsf(gamma * gamma, 2, u * u)


def log_miss_probability(u, gamma: float):
    """``log(1 - P_d(u))``, accurate when detection is nearly certain."""
    u = np.asarray(u, dtype=float)
    return stats.ncx2.logcdf(gamma * gamma, 2, u * u)


class DetectionTable:
    """Tabulated ``log P_d`` and ``log(1 - P_d)`` for a fixed threshold.

    Linear interpolation on a uniform amplitude grid; amplitudes beyond the
    grid use the last node. Used by the filter, where exact Marcum-Q calls
    per particle are too slow.
    """

    def __init__(self, gamma: float, u_max: float = 60.0, step: float = 5e-3):
        self.gamma = gamma
        self.step = step
        self.grid = np.arange(0.0, u_max + step, step)
        # floor keeps interpolation finite where the probability underflows
        self._log_pd = np.maximum(log_detection_probability(self.grid, gamma), -1e3)
        self._log_miss = np.maximum(log_miss_probability(self.grid, gamma), -1e3)

    @classmethod
    @functools.lru_cache(maxsize=8)
    def cached(cls, gamma: float) -> "DetectionTable":
        return cls(gamma)

    def _interp(self, table, u):
        x = np.clip(np.asarray(u, dtype=float) / self.step, 0.0, len(self.grid) - 1.000001)
        i = x.astype(np.intp)
        f = x - i
        return table[i] * (1.0 - f) + table[i + 1] * f

    def log_pd(self, u):
        return self._interp(self._log_pd, u)

    def log_miss(self, u):
        return self._interp(self._log_miss, u)


# ---------------------------------------------------------------------------
# amplitude densities


def rician_logpdf(x, nu):
    """Log-density of a unit-scale Rician with noncentrality ``nu`` at ``x > 0``."""
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(x) - 0.5 * (x - nu) ** 2 + np.log(special.i0e(x * nu))


def truncated_rician_logpdf(x, nu, gamma: float, table: "DetectionTable | None" = None):
    """Rician log-density truncated to ``x >= gamma``; ``table`` (built for
    the same ``gamma``) replaces the exact normalizer by interpolation."""
    x = np.asarray(x, dtype=float)
    log_norm = log_detection_probability(nu, gamma) if table is None else table.log_pd(nu)
    val = rician_logpdf(x, nu) - log_norm
    return np.where(x >= gamma, val, -np.inf)


def sample_truncated_rician(nu, gamma: float, uniform):
    """Inverse-CDF draw of a Rician truncated to ``[gamma, inf)``.

    ``uniform`` supplies the U(0, 1) variates so the caller controls the
    random stream.
    """
    nu = np.asarray(nu, dtype=float)
    tail = stats.ncx2.sf(gamma * gamma, 2, nu * nu)
    x2 = stats.ncx2.isf(np.asarray(uniform) * tail, 2, nu * nu)
    return np.maximum(np.sqrt(x2), gamma)


# ---------------------------------------------------------------------------
# measurement likelihood


def _gauss_logpdf(resid, sigma):
    return -0.5 * (resid / sigma) ** 2 - np.log(sigma) - 0.5 * LOG_2PI


def log_mpc_likelihood(z, d, phi, u, noise: NoiseParams):
    """Log ``f(z | agent, feature)`` from the geometric distance ``d``, AoA ``phi``
    and feature amplitude ``u``; broadcasts over all arguments.

    ``z`` is ``(..., 3)`` (distance, aoa, amplitude).
    """
    z = np.asarray(z, dtype=float)
    dh, ph, uh = z[..., 0], z[..., 1], z[..., 2]
    if np.any(uh < noise.gamma):
        raise ValueError("measured amplitude below detection threshold")
    ld = _gauss_logpdf(dh - d, noise.sigma_d0 / uh)
    lp = _gauss_logpdf(wrap_angle(ph - phi), noise.sigma_phi0 / uh)
    return ld + lp + truncated_rician_logpdf(uh, u, noise.gamma)


def log_geometric_likelihood(dh, ph, uh, d, phi, noise: NoiseParams):
    """Distance and AoA part of the measurement log-likelihood."""
    sd = noise.sigma_d0 / uh
    sp = noise.sigma_phi0 / uh
    rd = (dh - d) / sd
    rp = wrap_angle(ph - phi) / sp
    return -0.5 * (rd * rd + rp * rp) - np.log(sd * sp) - LOG_2PI


def log_detected_likelihood(dh, ph, uh, d, phi, u, noise: NoiseParams):
    """Log of ``P_d(u) f(z | agent, feature)`` for the hot path.

    The Marcum-Q normalizer of the truncated amplitude density cancels
    against ``P_d(u)``, leaving the untruncated Rician density.
    """
    return log_geometric_likelihood(dh, ph, uh, d, phi, noise) + rician_logpdf(uh, u)


def mpc_likelihood(z: Measurement, agent_pos, feature_pos, feature_u: float, noise: NoiseParams, orientation: float = 0.0) -> float:
    if z.amplitude < noise.gamma:
        raise ValueError("measured amplitude below detection threshold")
    d, phi = range_aoa(agent_pos, orientation, feature_pos)
    return float(np.exp(log_mpc_likelihood(z.as_array(), d, phi, feature_u, noise)))


def log_fa_density(z, noise: NoiseParams, fa: FalseAlarmModel):
    z = np.asarray(z, dtype=float)
    dh, uh = z[..., 0], z[..., 2]
    in_range = (dh >= fa.d_min) & (dh <= fa.d_max)
    val = -math.log(fa.d_max - fa.d_min) - LOG_2PI + truncated_rician_logpdf(uh, 0.0, noise.gamma)
    return np.where(in_range, val, -np.inf)


def fa_density(z: Measurement, noise: NoiseParams, fa: FalseAlarmModel) -> float:
    return float(np.exp(log_fa_density(z.as_array(), noise, fa)))


# ---------------------------------------------------------------------------
# pseudo-likelihood factors


def g_legacy(
    agent_pos,
    feature_pos,
    feature_u: float,
    r: int,
    c: int,
    z_set,
    noise: NoiseParams,
    fa: FalseAlarmModel,
    orientation: float = 0.0,
) -> float:
    """Legacy-feature factor for existence ``r`` and association ``c``.

    ``c = 0`` is a missed detection, ``c = m`` associates measurement ``m``
    (1-based) with the feature. The detection probability is evaluated at
    the feature amplitude.
    """
    z_set = np.atleast_2d(np.asarray(z_set, dtype=float)) if len(z_set) else np.zeros((0, 3))
    M = z_set.shape[0]
    if not 0 <= c <= M:
        raise ValueError(f"association {c} out of range 0..{M}")
    if r == 0:
        return 1.0 if c == 0 else 0.0
    if c == 0:
        return 1.0
    z = z_set[c - 1]
    d, phi = range_aoa(agent_pos, orientation, feature_pos)
    log_num = log_detection_probability(feature_u, noise.gamma) + log_mpc_likelihood(z, d, phi, feature_u, noise)
    return float(np.exp(log_num - math.log(fa.mu_fa) - log_fa_density(z, noise, fa)))


def h_new(
    agent_pos,
    feature_pos,
    feature_u: float,
    r: int,
    b: int,
    z,
    noise: NoiseParams,
    fa: FalseAlarmModel,
    orientation: float = 0.0,
) -> float:
    """New-feature factor; ``b > 0`` means the measurement went to legacy feature ``b``.

    The dummy density for a nonexistent new feature is the constant 1.
    """
    if r == 0:
        return 1.0
    if b != 0:
        return 0.0
    z = np.asarray(z, dtype=float)
    d, phi = range_aoa(agent_pos, orientation, feature_pos)
    log_num = log_mpc_likelihood(z, d, phi, feature_u, noise)
    return float(np.exp(log_num - math.log(fa.mu_fa) - log_fa_density(z, noise, fa)))


