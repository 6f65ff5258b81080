"""Particle-based BP multipath SLAM with interacting multiple agent dynamics.

The agent belief is a particle set over position, velocity and dynamic mode;
every particle carries its own mode index, drawn from the Markov chain at
each prediction, followed by a near-constant-velocity step with that mode's
driving-noise level. For every physical anchor (PA) the filter keeps

* the line-of-sight feature at the known PA position (existence fixed to 1,
  only its amplitude is estimated), and
* a list of potential virtual anchors (PVAs), each a particle cloud over
  position and normalized amplitude plus an existence probability.

Per anchor, one message-passing round is run: association weights are
obtained by Monte Carlo integration over paired agent/feature particles, the
association marginals by :func:`mpslam.association.spa_da`, and the returned
messages reweight the agent particles, the legacy PVAs and their existence
probabilities. Each measurement spawns a new PVA whose existence follows from
the birth intensity and the association result. PVAs below the pruning
threshold are dropped right after the anchor is processed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .association import AssociationWeights, spa_da
from .geometry import range_aoa_batch
from .measurement_model import (
    BirthModel,
    DetectionTable,
    FalseAlarmModel,
    NoiseParams,
    log_fa_density,
    log_geometric_likelihood,
    rician_logpdf,
    truncated_rician_logpdf,
)
from .resampling import (
    FilterDivergenceError,
    effective_sample_size,
    log_sum_exp,
    normalize_log_weights,
    systematic_resample,
)

if TYPE_CHECKING:
    from .scenario import Scenario

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FilterParams:
    survival: float = 0.999
    p_detect: float = 0.5  # existence needed to report a feature
    p_prune: float = 1e-3
    sigma_a: float = 3e-3  # PVA position regularization noise [m]
    sigma_u: float = 0.05  # amplitude random-walk std per step
    amplitude_walk: str = "relative"  # "relative": std sigma_u * u, "absolute": std sigma_u
    transition: tuple = ((0.99, 0.01), (0.01, 0.99))  # [prev][next]
    sigma_w: tuple = (0.0032, 0.01)  # driving-noise std per mode
    dt: float = 1.0
    n_agent: int = 3000
    n_feature: int = 1000
    init_pos_halfwidth: float = 0.1
    init_vel_halfwidth: float = 0.05
    da_tol: float = 1e-8
    da_max_iter: int = 10_000
    new_amplitude_std: float = 1.0  # proposal std for new-PVA amplitudes
    agent_pairings: int = 4  # feature-particle pairings averaged in the agent message
    gate_sigma: float = 8.0  # range gate in combined standard deviations
    feature_ess_ratio: float = 0.5

    def __post_init__(self):
        q = np.asarray(self.transition, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != len(self.sigma_w):
            raise ValueError("transition must be QxQ with one sigma_w per mode")
        if np.any(q < 0) or not np.allclose(q.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition rows must be probability vectors")
        if any(s < 0 for s in self.sigma_w):
            raise ValueError("sigma_w must be nonnegative")
        if not 0 <= self.survival <= 1 or not 0 < self.p_prune < 1 or not 0 < self.p_detect < 1:
            raise ValueError("probabilities out of range")
        if self.n_agent < 1 or self.n_feature < 1 or self.n_feature > self.n_agent:
            raise ValueError("need 1 <= n_feature <= n_agent")
        if self.amplitude_walk not in ("relative", "absolute"):
            raise ValueError("amplitude_walk must be 'relative' or 'absolute'")

    @property
    def num_modes(self) -> int:
        return len(self.sigma_w)

    def mode_model(self) -> "ModeModel":
        return ModeModel(np.asarray(self.transition, dtype=float), np.asarray(self.sigma_w, dtype=float), self.dt)


@dataclass
class ModeModel:
    transition: np.ndarray  # (Q, Q), row = previous mode
    sigma_w: np.ndarray  # (Q,)
    dt: float = 1.0

    @property
    def num_modes(self) -> int:
        return len(self.sigma_w)


@dataclass
class AgentBelief:
    pos: np.ndarray  # (N, D)
    vel: np.ndarray  # (N, D)
    mode: np.ndarray  # (N,) 0-based mode index
    w: np.ndarray  # (N,)

    @property
    def size(self) -> int:
        return len(self.w)


@dataclass
class PvaBelief:
    anchor_id: int
    label: int
    pos: np.ndarray  # (Nf, 2)
    u: np.ndarray  # (Nf,)
    w: np.ndarray  # (Nf,)
    existence: float
    is_anchor: bool = False
    born: int = 0

    def mean_position(self) -> np.ndarray:
        return self.w @ self.pos

    def mean_amplitude(self) -> float:
        return float(self.w @ self.u)


@dataclass
class FeatureEstimate:
    anchor_id: int
    label: int
    existence: float
    position: np.ndarray
    amplitude: float


@dataclass
class Estimate:
    position: np.ndarray
    velocity: np.ndarray
    mode_pmf: np.ndarray
    mode_mmse: float  # 1-based expectation of the mode index
    mode_map: int  # 1-based
    features: list[FeatureEstimate]  # detected PVAs only
    existences: dict[int, dict[int, float]]  # anchor -> label -> existence


@dataclass
class FilterState:
    agent: AgentBelief
    params: FilterParams
    mode_model: ModeModel
    noise: NoiseParams
    false_alarm: FalseAlarmModel
    birth: BirthModel
    anchor_positions: dict[int, np.ndarray]
    los: dict[int, PvaBelief]
    pvas: dict[int, list[PvaBelief]]
    next_label: dict[int, int]
    # PVA count per anchor after the last update, before pruning
    count_before_prune: dict[int, int] = field(default_factory=dict)
    step: int = 0
    orientation: float = 0.0
    last_da: dict[int, object] = field(default_factory=dict)

    @property
    def table(self) -> DetectionTable:
        return DetectionTable.cached(self.noise.gamma)


# ---------------------------------------------------------------------------
# initialization and prediction


def init_filter(scenario: "Scenario", rng: np.random.Generator, params: FilterParams | None = None) -> FilterState:
    params = params or scenario.filter
    if scenario.false_alarm.mu_fa <= 0:
        raise ValueError("the filter needs a positive false-alarm rate")
    n = params.n_agent
    p0 = scenario.track[0]
    pos = p0 + rng.uniform(-params.init_pos_halfwidth, params.init_pos_halfwidth, (n, 2))
    vel = rng.uniform(-params.init_vel_halfwidth, params.init_vel_halfwidth, (n, 2))
    mode = rng.integers(0, params.num_modes, n)
    agent = AgentBelief(pos, vel, mode, np.full(n, 1.0 / n))

    nf = params.n_feature
    los, pvas, next_label = {}, {}, {}
    anchor_positions = {}
    for a in scenario.anchors:
        apos = a.position.as_array()
        anchor_positions[a.anchor_id] = apos
        u0 = rng.uniform(scenario.birth.u_min, scenario.birth.u_max, nf)
        los[a.anchor_id] = PvaBelief(
            a.anchor_id, 0, np.tile(apos, (nf, 1)), u0, np.full(nf, 1.0 / nf), 1.0, is_anchor=True
        )
        pvas[a.anchor_id] = []
        next_label[a.anchor_id] = 1
    return FilterState(
        agent=agent,
        params=params,
        mode_model=params.mode_model(),
        noise=scenario.noise,
        false_alarm=scenario.false_alarm,
        birth=scenario.birth,
        anchor_positions=anchor_positions,
        los=los,
        pvas=pvas,
        next_label=next_label,
        count_before_prune={a.anchor_id: 0 for a in scenario.anchors},
        orientation=scenario.simulation.orientation,
    )


def sample_modes(mode: np.ndarray, transition: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw each particle's next mode from row ``mode`` of ``transition``."""
    if transition.shape[0] == 1:
        return mode
    cdf = np.cumsum(transition, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(mode.size)
    return (u[:, None] >= cdf[mode]).sum(axis=1)


def predict_agent(agent: AgentBelief, mode_model: ModeModel, rng: np.random.Generator) -> AgentBelief:
    """Mode transition, then a near-constant-velocity step with the new mode's noise.

    The driving acceleration is white within the step (discrete white-noise
    acceleration): position gains ``dt^2 / 2 * a``, velocity ``dt * a``.
    Works for any spatial dimension.
    """
    mode = sample_modes(agent.mode, mode_model.transition, rng)
    dt = mode_model.dt
    acc = rng.standard_normal(agent.pos.shape) * mode_model.sigma_w[mode][:, None]
    pos = agent.pos + dt * agent.vel + 0.5 * dt * dt * acc
    vel = agent.vel + dt * acc
    return AgentBelief(pos, vel, mode, agent.w)


def _walk_amplitude(u: np.ndarray, params: FilterParams, rng: np.random.Generator) -> np.ndarray:
    scale = params.sigma_u * u if params.amplitude_walk == "relative" else params.sigma_u
    return np.abs(u + scale * rng.standard_normal(u.shape))


def predict(state: FilterState, rng: np.random.Generator) -> FilterState:
    p = state.params
    state.agent = predict_agent(state.agent, state.mode_model, rng)
    for aid in sorted(state.los):
        los = state.los[aid]
        los.u = _walk_amplitude(los.u, p, rng)
        for f in state.pvas[aid]:
            f.existence *= p.survival
            f.pos = f.pos + p.sigma_a * rng.standard_normal(f.pos.shape)
            f.u = _walk_amplitude(f.u, p, rng)
    state.step += 1
    return state


# ---------------------------------------------------------------------------
# measurement update


def _pairing(n_agent: int, n_feature: int, rng: np.random.Generator) -> np.ndarray:
    """Feature-particle index paired with each agent particle.

    Every feature particle is used ``n_agent // n_feature`` or one more times.
    """
    idx = np.empty(n_agent, dtype=np.intp)
    idx[rng.permutation(n_agent)] = np.arange(n_agent) % n_feature
    return idx


def _gate(agent_mean, agent_spread, f: PvaBelief, z, noise: NoiseParams, gate: float) -> np.ndarray:
    """Indices of measurements whose distance is compatible with feature ``f``.

    A measurement is dropped when its distance deviates from the predicted
    one by more than ``gate`` standard deviations, where the spread of both
    particle clouds is added to the measurement noise. Dropped pairs get a
    zero association weight.
    """
    if not np.isfinite(gate):
        return np.arange(len(z))
    mean = f.w @ f.pos
    spread2 = float(f.w @ np.sum((f.pos - mean) ** 2, axis=1))
    d_pred = float(np.hypot(*(mean - agent_mean)))
    sigma = np.sqrt((noise.sigma_d0 / z[:, 2]) ** 2 + agent_spread**2 + spread2)
    return np.flatnonzero(np.abs(z[:, 0] - d_pred) <= gate * sigma)


def _log1m(r: float) -> float:
    return math.log1p(-r) if r < 1.0 else -math.inf


def _new_pva_candidates(state: FilterState, z: np.ndarray, log_clutter: float, rng: np.random.Generator):
    """Importance samples for a new PVA generated by measurement ``z``.

    One candidate per agent particle: distance and angle perturbed with the
    measurement noise and mapped through the agent position; amplitude from a
    Gaussian around the measured one. Returns candidate positions,
    amplitudes, log importance weights (which include the agent weights) and
    the log of the birth integral, the expected new-feature likelihood
    ratio under the birth prior.
    """
    noise, birth, p = state.noise, state.birth, state.params
    x = state.agent.pos
    n = len(x)
    d_hat, phi_hat, u_hat = z
    draws = rng.standard_normal((3, n))
    rho = d_hat + noise.sigma_d0 / u_hat * draws[0]
    theta = phi_hat + state.orientation + noise.sigma_phi0 / u_hat * draws[1]
    u = u_hat + p.new_amplitude_std * draws[2]
    pos = x + rho[:, None] * np.column_stack((np.cos(theta), np.sin(theta)))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q_u = -0.5 * draws[2] ** 2 - math.log(p.new_amplitude_std) - 0.5 * _LOG_2PI
        log_amp = np.where(u > 0, truncated_rician_logpdf(u_hat, np.maximum(u, 0.0), noise.gamma, state.table), -np.inf)
        log_v = (
            np.log(state.agent.w)
            + birth.log_density(pos, u)
            + np.where(rho > 0, np.log(np.abs(rho)), -np.inf)
            + log_amp
            - log_q_u
        )
    log_integral = log_sum_exp(log_v) - log_clutter
    return pos, u, log_v, log_integral


def update_anchor(state: FilterState, anchor_id: int, z: np.ndarray, rng: np.random.Generator) -> FilterState:
    """Process the measurement set ``z`` (``(M, 3)``) of one anchor."""
    p = state.params
    noise, fa, birth = state.noise, state.false_alarm, state.birth
    z = np.asarray(z, dtype=float).reshape(-1, 3)
    if np.any(z[:, 2] < noise.gamma):
        raise ValueError("measurement amplitude below detection threshold")
    M = len(z)
    agent = state.agent
    na = agent.size
    log_wa = np.log(agent.w)
    table = state.table

    features = [state.los[anchor_id]] + state.pvas[anchor_id]
    K = len(features)
    r = np.array([f.existence for f in features])
    log_clutter = math.log(fa.mu_fa) + log_fa_density(z, noise, fa) if M else np.zeros(0)

    # Monte Carlo association weights from paired agent / feature particles
    agent_mean = agent.w @ agent.pos
    agent_spread = math.sqrt(float(agent.w @ np.sum((agent.pos - agent_mean) ** 2, axis=1)))
    gated, pair_idx, log_l, log_miss = [], [], [], []
    log_agent_l, log_agent_miss, log_c = [], [], []
    log_beta = np.full((K, M + 1), -np.inf)
    for k, f in enumerate(features):
        nf = len(f.w)
        fi = _pairing(na, nf, rng)
        log_fw = np.log(f.w)
        lm_f = table.log_miss(f.u)
        lm = lm_f[fi]
        lw = log_wa + log_fw[fi]
        lw -= log_sum_exp(lw)
        sel = _gate(agent_mean, agent_spread, f, z, noise, p.gate_sigma) if M else np.zeros(0, dtype=np.intp)
        zs = z[sel]
        if len(sel):
            d, phi = range_aoa_batch(agent.pos, state.orientation, f.pos[fi])
            geo = log_geometric_likelihood(zs[:, 0:1], zs[:, 1:2], zs[:, 2:3], d, phi, noise)
            geo -= log_clutter[sel, None]
            amp = rician_logpdf(zs[:, 2:3], f.u[None, :])  # (S, nf)
            ll = geo + amp[:, fi]
            if r[k] > 0:
                log_beta[k, 1 + sel] = math.log(r[k]) + log_sum_exp(ll + lw, axis=1)
            # agent-side message: amplitude averaged over the feature cloud,
            # position averaged over several independent pairings
            abar = log_sum_exp(amp + log_fw, axis=1)[:, None]
            agent_l = [geo + abar]
            agent_c = [log_fw[fi] + math.log(nf)]
            for _ in range(1 if f.is_anchor else p.agent_pairings - 1):
                fj = _pairing(na, nf, rng)
                dj, phij = range_aoa_batch(agent.pos, state.orientation, f.pos[fj])
                gj = log_geometric_likelihood(zs[:, 0:1], zs[:, 1:2], zs[:, 2:3], dj, phij, noise)
                agent_l.append(gj - log_clutter[sel, None] + abar)
                agent_c.append(log_fw[fj] + math.log(nf))
            log_agent_l.append(np.stack(agent_l))
            log_c.append(np.stack(agent_c))
        else:
            ll = None
            log_agent_l.append(None)
            log_c.append(None)
        miss = log_sum_exp(lw + lm)
        log_beta[k, 0] = np.logaddexp(_log1m(r[k]), math.log(r[k]) + miss) if r[k] > 0 else 0.0
        gated.append(sel)
        pair_idx.append(fi)
        log_l.append(ll)
        log_miss.append(lm)
        log_agent_miss.append(log_sum_exp(log_fw + lm_f))

    # new-PVA candidates and birth weights
    cand = []
    log_integral = np.full(M, -np.inf)
    for m in range(M):
        c = _new_pva_candidates(state, z[m], log_clutter[m], rng)
        cand.append(c)
        log_integral[m] = c[3]
    with np.errstate(divide="ignore"):
        log_birth = math.log(birth.mu_n) + log_integral if birth.mu_n > 0 else np.full(M, -np.inf)
    log_xi = np.logaddexp(0.0, log_birth)

    # association. Scaling a measurement column together with its xi entry,
    # or a feature row, leaves the marginals unchanged; both are used to keep
    # the weights in floating-point range
    col = np.maximum(log_xi, log_beta[:, 1:].max(axis=0))
    log_beta[:, 1:] -= col
    log_beta -= log_beta.max(axis=1, keepdims=True)
    beta = np.exp(log_beta)
    beta[:, 0] = np.maximum(beta[:, 0], 1e-300)
    xi = np.maximum(np.exp(log_xi - col), 1e-300)
    da = spa_da(AssociationWeights(beta, xi), tol=p.da_tol, max_iter=p.da_max_iter)
    state.last_da[anchor_id] = da
    # nu scales inversely with the column factor
    log_nu = np.log(da.nu) - col[:, None] if M else np.zeros((0, K))

    # messages to agent and features
    log_agent_msg = np.zeros(na)
    for k, f in enumerate(features):
        if r[k] <= 0:
            continue
        sel = gated[k]
        if len(sel):
            lnu = log_nu[sel, k][:, None]
            log_a = np.logaddexp(log_miss[k], log_sum_exp(log_l[k] + lnu, axis=0))
            per_pair = log_c[k] + log_sum_exp(log_agent_l[k] + lnu[None], axis=1)
            log_det = log_sum_exp(per_pair, axis=0) - math.log(len(per_pair))
            log_msg = np.logaddexp(log_agent_miss[k], log_det)
        else:
            log_a = log_miss[k]
            log_msg = np.full(na, log_agent_miss[k])
        log_agent_msg += np.logaddexp(_log1m(r[k]), math.log(r[k]) + log_msg)

        top = log_a.max()
        a = np.exp(log_a - top) * agent.w
        fi = pair_idx[k]
        nf = len(f.w)
        num = np.bincount(fi, weights=a, minlength=nf)
        den = np.bincount(fi, weights=agent.w, minlength=nf)
        a_l = num / np.maximum(den, 1e-300)
        s = float(f.w @ a_l)
        if not s > 0:
            if f.is_anchor:
                raise FilterDivergenceError(f"anchor {anchor_id}: LOS feature lost all weight")
            f.existence = 0.0
            continue
        f.w = f.w * a_l / s
        if not f.is_anchor:
            log_num = math.log(r[k]) + top + math.log(s)
            f.existence = float(math.exp(log_num - np.logaddexp(_log1m(r[k]), log_num)))

    agent.w = normalize_log_weights(log_wa + log_agent_msg)

    # new PVAs
    pvas = state.pvas[anchor_id]
    state.count_before_prune[anchor_id] = len(pvas) + M
    claimed = da.mu.sum(axis=0) if M and K else np.zeros(M)
    new = []
    nf = p.n_feature
    for m in range(M):
        r_new = float(np.exp(log_birth[m] - col[m]) / (xi[m] + claimed[m]))
        label = state.next_label[anchor_id]
        state.next_label[anchor_id] += 1
        if r_new < p.p_prune:
            continue
        pos, u, log_v, _ = cand[m]
        idx = systematic_resample(normalize_log_weights(log_v), rng, nf)
        new.append(PvaBelief(anchor_id, label, pos[idx], u[idx], np.full(nf, 1.0 / nf), r_new, born=state.step))

    state.pvas[anchor_id] = [f for f in pvas if f.existence >= p.p_prune] + new
    return state


# ---------------------------------------------------------------------------
# resampling and estimation


def resample(state: FilterState, rng: np.random.Generator) -> FilterState:
    """Systematic resampling of the agent; feature clouds only when degenerate."""
    agent = state.agent
    idx = systematic_resample(agent.w, rng)
    state.agent = AgentBelief(agent.pos[idx], agent.vel[idx], agent.mode[idx], np.full(agent.size, 1.0 / agent.size))
    limit = state.params.feature_ess_ratio
    for aid in sorted(state.los):
        for f in [state.los[aid]] + state.pvas[aid]:
            nf = len(f.w)
            if effective_sample_size(f.w) < limit * nf:
                j = systematic_resample(f.w, rng)
                f.pos, f.u, f.w = f.pos[j], f.u[j], np.full(nf, 1.0 / nf)
    return state


def estimate(state: FilterState) -> Estimate:
    agent = state.agent
    w = agent.w
    q = state.mode_model.num_modes
    pmf = np.bincount(agent.mode, weights=w, minlength=q)
    pmf = pmf / pmf.sum()
    feats = []
    existences = {}
    for aid in sorted(state.pvas):
        existences[aid] = {}
        for f in state.pvas[aid]:
            existences[aid][f.label] = f.existence
            if f.existence > state.params.p_detect:
                feats.append(FeatureEstimate(aid, f.label, f.existence, f.mean_position(), f.mean_amplitude()))
    return Estimate(
        position=w @ agent.pos,
        velocity=w @ agent.vel,
        mode_pmf=pmf,
        mode_mmse=float(np.arange(1, q + 1) @ pmf),
        mode_map=int(np.argmax(pmf)) + 1,
        features=feats,
        existences=existences,
    )


def filter_step(state: FilterState, measurement_sets: dict[int, np.ndarray], rng: np.random.Generator, first: bool = False) -> Estimate:
    """Prediction (skipped on the first step), all anchor updates in id order,
    estimation, then resampling."""
    if not first:
        predict(state, rng)
    for aid in sorted(state.los):
        update_anchor(state, aid, measurement_sets.get(aid, np.zeros((0, 3))), rng)
    est = estimate(state)
    resample(state, rng)
    return est
