"""Synthetic MPC measurements from the scenario geometry.

Per anchor and time step, the line-of-sight path (feature id 0) and every
visible virtual anchor (feature id ``i + 1`` for the ``i``-th enumerated VA)
are detected with probability ``Q1(u, gamma)``. Detected features emit
``u_hat`` from the truncated Rician, then ``d_hat`` and ``phi_hat`` with
standard deviations ``sigma_d0 / u_hat`` and ``sigma_phi0 / u_hat``. A
Poisson number of false alarms follows. Random draws happen in a fixed
order so a seed reproduces the epoch exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import amplitude_from_distance, range_aoa, reflection_visible, wrap_angle
from .measurement_model import detection_probability, sample_truncated_rician
from .scenario import Scenario

FALSE_ALARM = -1
MEASUREMENT_SCHEMA = "mpslam-measurements/1"


@dataclass
class FeatureTruth:
    feature_id: int
    distance: float
    aoa: float
    amplitude: float
    detected: bool


@dataclass
class EpochTruth:
    step: int
    features: dict[int, list[FeatureTruth]] = field(default_factory=dict)
    # per anchor, origin of each emitted measurement (feature id or FALSE_ALARM)
    origins: dict[int, np.ndarray] = field(default_factory=dict)


def _feature_sources(scenario: Scenario, anchor_index: int):
    anchor = scenario.anchors[anchor_index]
    sources = [(0, anchor.position, None)]
    for i, va in enumerate(scenario.virtual_anchors(anchor)):
        sources.append((i + 1, va.position, va))
    return sources


def simulate_epoch(scenario: Scenario, n: int, rng: np.random.Generator, force_detection: bool = False):
    """Measurement sets ``{anchor_id: (M, 3) array}`` and ground truth for step ``n``."""
    if not 0 <= n < scenario.num_steps:
        raise IndexError(f"time index {n} outside track of length {scenario.num_steps}")
    noise = scenario.noise
    fa = scenario.false_alarm
    amp = scenario.amplitude
    agent = scenario.track[n]
    psi = scenario.simulation.orientation
    truth = EpochTruth(step=n)
    measurements: dict[int, np.ndarray] = {}
    for j, anchor in enumerate(scenario.anchors):
        rows, origins, feats = [], [], []
        for fid, pos, va in _feature_sources(scenario, j):
            if va is not None and scenario.simulation.enforce_visibility:
                if not reflection_visible(agent, va, scenario.floorplan):
                    continue
            d, phi = range_aoa(agent, psi, pos)
            u = amplitude_from_distance(d, amp.u_ref, amp.d_ref)
            pd = 1.0 if force_detection else detection_probability(u, noise.gamma)
            detected = bool(rng.random() < pd)
            feats.append(FeatureTruth(fid, d, phi, u, detected))
            if not detected:
                continue
            u_hat = float(sample_truncated_rician(u, noise.gamma, rng.random()))
            d_hat = d + noise.sigma_d0 / u_hat * rng.standard_normal()
            phi_hat = float(wrap_angle(phi + noise.sigma_phi0 / u_hat * rng.standard_normal()))
            rows.append((max(d_hat, 0.0), phi_hat, u_hat))
            origins.append(fid)
        n_fa = int(rng.poisson(fa.mu_fa)) if fa.mu_fa > 0 else 0
        if n_fa:
            d_fa = rng.uniform(fa.d_min, fa.d_max, n_fa)
            phi_fa = rng.uniform(-np.pi, np.pi, n_fa)
            u_fa = sample_truncated_rician(np.zeros(n_fa), noise.gamma, rng.random(n_fa))
            rows.extend(zip(d_fa, phi_fa, u_fa))
            origins.extend([FALSE_ALARM] * n_fa)
        z = np.array(rows, dtype=float).reshape(-1, 3)
        order = rng.permutation(len(z))
        measurements[anchor.anchor_id] = z[order]
        truth.features[anchor.anchor_id] = feats
        truth.origins[anchor.anchor_id] = np.asarray(origins, dtype=int).reshape(-1)[order]
    return measurements, truth


def simulate_run(scenario: Scenario, rng: np.random.Generator):
    """All epochs of one run, in time order."""
    out = [simulate_epoch(scenario, n, rng) for n in range(scenario.num_steps)]
    return [m for m, _ in out], [t for _, t in out]


def write_measurements_csv(path, measurement_sets, truths=None) -> None:
    """Export measurement sets in the schema :func:`read_measurements_csv` consumes."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={MEASUREMENT_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "anchor", "index", "distance", "aoa", "amplitude", "origin"])
        for n, sets in enumerate(measurement_sets):
            for anchor_id, z in sets.items():
                origins = truths[n].origins[anchor_id] if truths is not None else None
                for m, (d, phi, u) in enumerate(z):
                    origin = int(origins[m]) if origins is not None else ""
                    w.writerow([n, anchor_id, m, repr(float(d)), repr(float(phi)), repr(float(u)), origin])


def read_measurements_csv(path, anchor_ids, num_steps: int):
    sets = [{a: [] for a in anchor_ids} for _ in range(num_steps)]
    with Path(path).open() as fh:
        first = fh.readline()
        if MEASUREMENT_SCHEMA not in first:
            raise ValueError(f"{path}: missing schema line {MEASUREMENT_SCHEMA!r}")
        for row in csv.DictReader(fh):
            n = int(row["step"])
            sets[n][int(row["anchor"])].append((float(row["distance"]), float(row["aoa"]), float(row["amplitude"])))
    return [{a: np.array(v, dtype=float).reshape(-1, 3) for a, v in s.items()} for s in sets]


def write_truth_csv(path, scenario: Scenario) -> None:
    """Ground-truth agent trace."""
    with Path(path).open("w", newline="") as fh:
        fh.write("# schema=mpslam-truth/1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "y", "mode"])
        for n, (x, y) in enumerate(scenario.track):
            q = int(scenario.true_modes[n]) if scenario.true_modes is not None else ""
            w.writerow([n, repr(float(x)), repr(float(y)), q])
