"""Probabilistic data association between legacy features and measurements.

Association events are encoded twice: ``c[k] in {0..M}`` (the measurement
feature ``k`` generated, 0 = missed) and ``b[m] in {0..K}`` (the feature that
generated measurement ``m``, 0 = none). Both indices are 1-based for real
entries. An event's unnormalized probability is

    prod_k beta[k, c_k] * prod_{m unclaimed} xi[m]

and only events where ``c`` and ``b`` describe the same one-to-one
assignment contribute.

Scaled message passing (bipartite loopy BP) with leave-one-out sums:

    mu[k, m] = beta[k, m] / (beta[k, 0] + sum_{m' != m} beta[k, m'] nu[m', k])
    nu[m, k] = 1 / (xi[m] + sum_{k' != k} mu[k', m])

The ``beta[k, 0]`` missed-detection weight and the ``xi[m]`` new-feature /
false-alarm weight enter only through these normalizations; the message
for the "0" state is fixed to one on both sides. Beliefs are

    p(c_k = m) ~ beta[k, m] nu[m, k],   p(c_k = 0) ~ beta[k, 0]
    p(b_m = k) ~ mu[k, m],              p(b_m = 0) ~ xi[m]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORACLE_MAX_SIZE = 8


@dataclass
class AssociationWeights:
    beta: np.ndarray  # (K, M + 1)
    xi: np.ndarray  # (M,)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).reshape(-1)
        beta = np.asarray(self.beta, dtype=float)
        self.beta = beta.reshape(0, self.xi.size + 1) if beta.size == 0 else np.atleast_2d(beta)
        K, M1 = self.beta.shape
        if K and M1 != self.xi.size + 1:
            raise ValueError(f"beta has {M1} columns but xi has {self.xi.size} entries")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.xi))):
            raise ValueError("association weights must be finite")
        if np.any(self.beta < 0) or np.any(self.xi < 0):
            raise ValueError("association weights must be nonnegative")
        if K and np.any(self.beta[:, 0] <= 0):
            raise ValueError("missed-detection weights beta[k, 0] must be positive")

    @property
    def num_features(self) -> int:
        return self.beta.shape[0]

    @property
    def num_measurements(self) -> int:
        return self.xi.size


@dataclass
class AssociationMarginals:
    p_c: np.ndarray  # (K, M + 1)
    p_b: np.ndarray  # (M, K + 1)
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    # converged messages; nu is (M, K), mu is (K, M)
    nu: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    mu: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def consistency(c, b) -> int:
    """1 if ``c`` and ``b`` describe the same association event, else 0."""
    c = [int(x) for x in c]
    b = [int(x) for x in b]
    for k, ck in enumerate(c, start=1):
        for m, bm in enumerate(b, start=1):
            if (ck == m) != (bm == k):
                return 0
    return 1


def _as_weights(w) -> AssociationWeights:
    if isinstance(w, AssociationWeights):
        return w
    beta, xi = w
    return AssociationWeights(beta, xi)


def enumerate_da_oracle(w) -> AssociationMarginals:
    """Exact marginals by summing over every one-to-one association event."""
    w = _as_weights(w)
    beta, xi = w.beta, w.xi
    K, M = w.num_features, w.num_measurements
    if K > ORACLE_MAX_SIZE or M > ORACLE_MAX_SIZE:
        raise ValueError(f"enumeration refused for K={K}, M={M} (limit {ORACLE_MAX_SIZE})")

    p_c = np.zeros((K, M + 1))
    p_b = np.zeros((M, K + 1))
    total = 0.0
    c = [0] * K
    claimed = [False] * M

    def visit(k: int, weight: float) -> None:
        nonlocal total
        if k == K:
            ev = weight
            for m in range(M):
                if not claimed[m]:
                    ev *= xi[m]
            if ev == 0.0:
                return
            total += ev
            for kk in range(K):
                p_c[kk, c[kk]] += ev
            for m in range(M):
                p_b[m, 0] += 0.0 if claimed[m] else ev
            for kk in range(K):
                if c[kk]:
                    p_b[c[kk] - 1, kk + 1] += ev
            return
        c[k] = 0
        visit(k + 1, weight * beta[k, 0])
        for m in range(M):
            if not claimed[m] and beta[k, m + 1] > 0:
                claimed[m] = True
                c[k] = m + 1
                visit(k + 1, weight * beta[k, m + 1])
                claimed[m] = False
        c[k] = 0

    visit(0, 1.0)
    if total <= 0:
        raise ValueError("all association events have zero weight")
    return AssociationMarginals(p_c / total, p_b / total)


def _update_mu(beta: np.ndarray, nu: np.ndarray, off_diag: np.ndarray) -> np.ndarray:
    evidence = beta[:, 1:] * nu.T  # (K, M)
    denom = beta[:, :1] + evidence @ off_diag
    return beta[:, 1:] / denom


def _update_nu(xi: np.ndarray, mu: np.ndarray, off_diag_k: np.ndarray) -> np.ndarray:
    denom = xi[:, None] + mu.T @ off_diag_k  # (M, K)
    return 1.0 / denom


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    if new.size == 0:
        return 0.0
    scale = np.maximum(np.abs(new), np.abs(old))
    diff = np.abs(new - old)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return float(rel.max())


def spa_da(w, tol: float = 1e-8, max_iter: int = 10_000, damping: float = 0.0) -> AssociationMarginals:
    """Approximate association marginals by iterative message passing.

    Measurement-side messages ``mu`` are all refreshed from the current
    ``nu``, then all feature-side messages ``nu`` from the new ``mu``.
    Iteration stops once the largest relative change of any message drops
    below ``tol``. Hitting ``max_iter`` returns the current beliefs with
    ``converged=False``.
    """
    w = _as_weights(w)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must be in [0, 1)")
    beta, xi = w.beta, w.xi
    K, M = w.num_features, w.num_measurements
    if M and np.any(xi <= 0):
        raise ValueError("spa_da needs strictly positive xi")

    if K == 0 or M == 0:
        p_c = np.zeros((K, M + 1))
        p_c[:, 0] = 1.0
        p_b = np.zeros((M, K + 1))
        p_b[:, 0] = 1.0
        return AssociationMarginals(p_c, p_b, nu=np.ones((M, K)), mu=np.zeros((K, M)))

    off_m = 1.0 - np.eye(M)
    off_k = 1.0 - np.eye(K)
    nu = np.ones((M, K))
    mu = _update_mu(beta, nu, off_m)
    converged = False
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        nu_new = _update_nu(xi, mu, off_k)
        if damping:
            nu_new = (1.0 - damping) * nu_new + damping * nu
        mu_new = _update_mu(beta, nu_new, off_m)
        residual = max(_rel_change(nu_new, nu), _rel_change(mu_new, mu))
        nu, mu = nu_new, mu_new
        if residual < tol:
            converged = True
            break

    p_c = np.empty((K, M + 1))
    p_c[:, 0] = beta[:, 0]
    p_c[:, 1:] = beta[:, 1:] * nu.T
    p_c /= p_c.sum(axis=1, keepdims=True)
    p_b = np.empty((M, K + 1))
    p_b[:, 0] = xi
    p_b[:, 1:] = mu.T
    p_b /= p_b.sum(axis=1, keepdims=True)
    return AssociationMarginals(p_c, p_b, converged, it, float(residual), nu, mu)


def fixed_point_residual(w, marginals: AssociationMarginals) -> float:
    """Largest relative violation of the message update equations."""
    w = _as_weights(w)
    K, M = w.num_features, w.num_measurements
    if K == 0 or M == 0:
        return 0.0
    nu, mu = marginals.nu, marginals.mu
    mu_fp = _update_mu(w.beta, nu, 1.0 - np.eye(M))
    nu_fp = _update_nu(w.xi, mu, 1.0 - np.eye(K))
    return max(_rel_change(mu_fp, mu), _rel_change(nu_fp, nu))
