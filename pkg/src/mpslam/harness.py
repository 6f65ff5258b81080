"""Multi-run experiment driver and metric reports.

Layout of an output directory::

    config.json                 run configuration
    scenario.yaml               scenario actually used (after overrides)
    run_000/measurements.csv    simulated measurements with their origin
    run_000/trajectory.csv      true / estimated agent state and mode pmf
    run_000/features.csv        detected features per step
    run_000/ospa.csv            per-anchor OSPA and detected counts
    ...
    rmse.csv, mospa_pa<j>.csv, mode_belief.csv, summary.json   (evaluate)

Every CSV starts with a ``# schema=<name>/<version>`` line.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics
from .geometry import visible_from
from .scenario import Scenario, build_default_scenario, dump_scenario, load_scenario
from .simulator import simulate_run, write_measurements_csv
from .slam_core import FilterParams, filter_step, init_filter

log = logging.getLogger(__name__)

OUT_ENV = "MPSLAM_OUT"
VARIANTS = ("imm", "single")
TRAJECTORY_SCHEMA = "mpslam-trajectory/1"
FEATURES_SCHEMA = "mpslam-features/1"
OSPA_SCHEMA = "mpslam-ospa/1"
RMSE_SCHEMA = "mpslam-rmse/1"
MOSPA_SCHEMA = "mpslam-mospa/1"
MODE_SCHEMA = "mpslam-mode-belief/1"
SUMMARY_SCHEMA = "mpslam-summary/1"


class HarnessError(RuntimeError):
    pass


@dataclass
class RunConfig:
    scenario_path: str | None = None  # None: built-in default scenario
    runs: int | None = None  # None: scenario value
    base_seed: int | None = None
    out_dir: str | None = None  # None: $MPSLAM_OUT or ./mpslam_out
    variant: str = "imm"
    n_agent: int | None = None
    n_feature: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise HarnessError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.runs is not None and self.runs < 1:
            raise HarnessError("runs must be >= 1")
        if self.jobs < 1:
            raise HarnessError("jobs must be >= 1")

    def output_dir(self) -> Path:
        return Path(self.out_dir or os.environ.get(OUT_ENV) or "mpslam_out")


def single_mode_params(params: FilterParams) -> FilterParams:
    """Baseline filter: one near-constant-velocity model with the low noise level."""
    return replace(params, transition=((1.0,),), sigma_w=(params.sigma_w[0],))


def prepare_scenario(cfg: RunConfig) -> Scenario:
    sc = load_scenario(cfg.scenario_path) if cfg.scenario_path else build_default_scenario()
    changes = {}
    if cfg.n_agent is not None:
        changes["n_agent"] = cfg.n_agent
        if cfg.n_feature is None and sc.filter.n_feature > cfg.n_agent:
            changes["n_feature"] = cfg.n_agent
    if cfg.n_feature is not None:
        changes["n_feature"] = cfg.n_feature
    try:
        filt = replace(sc.filter, **changes)
        if cfg.variant == "single":
            filt = single_mode_params(filt)
    except ValueError as exc:
        raise HarnessError(f"invalid filter settings: {exc}") from exc
    sc = replace(sc, filter=filt)
    if cfg.runs is not None:
        sc = replace(sc, runs=cfg.runs)
    if cfg.base_seed is not None:
        sc = replace(sc, base_seed=cfg.base_seed)
    return sc


def run_seeds(seed: int):
    """Independent generators for the simulator and the filter of one run.

    The simulator stream depends on the seed only, so all filter variants of
    a run see the same measurements.
    """
    sim, filt = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sim), np.random.default_rng(filt)


def true_feature_sets(scenario: Scenario, n: int) -> dict[int, np.ndarray]:
    """True VA positions visible from the agent at step ``n``, per anchor."""
    out = {}
    for a in scenario.anchors:
        vas = scenario.virtual_anchors(a)
        if scenario.simulation.enforce_visibility:
            vas = visible_from(scenario.track[n], vas, scenario.floorplan)
        out[a.anchor_id] = np.array([va.position for va in vas], dtype=float).reshape(-1, 2)
    return out


def _f(x) -> str:
    return repr(float(x))


def run_one(scenario: Scenario, run_index: int, out_dir: Path) -> dict:
    """Simulate, filter and write the per-step records of one run."""
    seed = scenario.base_seed + run_index
    sim_rng, filt_rng = run_seeds(seed)
    meas, truths = simulate_run(scenario, sim_rng)
    rdir = out_dir / f"run_{run_index:03d}"
    rdir.mkdir(parents=True, exist_ok=True)
    write_measurements_csv(rdir / "measurements.csv", meas, truths)

    q = scenario.filter.num_modes
    ospa_params = metrics.OspaParams()
    anchor_ids = [a.anchor_id for a in scenario.anchors]
    t0 = time.perf_counter()
    state = init_filter(scenario, filt_rng)
    with (rdir / "trajectory.csv").open("w", newline="") as ft, (rdir / "features.csv").open(
        "w", newline=""
    ) as ff, (rdir / "ospa.csv").open("w", newline="") as fo:
        ft.write(f"# schema={TRAJECTORY_SCHEMA}\n")
        ff.write(f"# schema={FEATURES_SCHEMA}\n")
        fo.write(f"# schema={OSPA_SCHEMA}\n")
        wt = csv.writer(ft, lineterminator="\n")
        wf = csv.writer(ff, lineterminator="\n")
        wo = csv.writer(fo, lineterminator="\n")
        wt.writerow(
            ["step", "true_x", "true_y", "true_mode", "est_x", "est_y", "est_vx", "est_vy", "error"]
            + [f"p_mode{i + 1}" for i in range(q)]
            + ["mode_mmse", "mode_map"]
        )
        wf.writerow(["step", "anchor", "label", "existence", "x", "y", "amplitude"])
        wo.writerow(["step"] + [f"ospa_pa{j}" for j in anchor_ids] + [f"detected_pa{j}" for j in anchor_ids])
        for n in range(scenario.num_steps):
            est = filter_step(state, meas[n], filt_rng, first=(n == 0))
            truth = scenario.track[n]
            tm = int(scenario.true_modes[n]) if scenario.true_modes is not None else ""
            err = float(np.linalg.norm(est.position - truth))
            wt.writerow(
                [n, _f(truth[0]), _f(truth[1]), tm]
                + [_f(v) for v in (*est.position, *est.velocity, err)]
                + [_f(v) for v in est.mode_pmf]
                + [_f(est.mode_mmse), est.mode_map]
            )
            true_sets = true_feature_sets(scenario, n)
            ospa_row, count_row = [], []
            for j in anchor_ids:
                feats = [f for f in est.features if f.anchor_id == j]
                for f in feats:
                    wf.writerow([n, j, f.label, _f(f.existence), _f(f.position[0]), _f(f.position[1]), _f(f.amplitude)])
                est_set = np.array([f.position for f in feats]).reshape(-1, 2)
                ospa_row.append(_f(metrics.ospa(est_set, true_sets[j], ospa_params)))
                count_row.append(len(feats))
            wo.writerow([n] + ospa_row + count_row)
    elapsed = time.perf_counter() - t0
    log.info("run %d (seed %d) finished in %.1f s", run_index, seed, elapsed)
    return {"run": run_index, "seed": seed, "filter_seconds": elapsed}


def _run_one_args(args):
    return run_one(*args)


def run(cfg: RunConfig) -> Path:
    """Execute all runs of ``cfg`` and write the evaluation report."""
    scenario = prepare_scenario(cfg)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.yaml").write_text(dump_scenario(scenario))
    conf = {k: v for k, v in asdict(cfg).items() if k != "jobs"}
    conf["runs"], conf["base_seed"] = scenario.runs, scenario.base_seed
    (out / "config.json").write_text(json.dumps(conf, indent=2, sort_keys=True) + "\n")
    tasks = [(scenario, r, out) for r in range(scenario.runs)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            list(pool.map(_run_one_args, tasks))
    else:
        for t in tasks:
            run_one(*t)
    evaluate(out)
    return out


# ---------------------------------------------------------------------------
# evaluation


def _read_csv(path: Path, schema: str):
    if not path.is_file():
        raise HarnessError(f"missing artifact {path}")
    with path.open() as fh:
        first = fh.readline()
        if f"schema={schema}" not in first:
            raise HarnessError(f"{path}: expected schema {schema!r}")
        rows = list(csv.DictReader(fh))
    if not rows:
        raise HarnessError(f"{path}: no records")
    return rows


@dataclass
class RunRecords:
    true_pos: np.ndarray  # (T, 2)
    est_pos: np.ndarray  # (T, 2)
    mode_pmf: np.ndarray  # (T, Q)
    ospa: dict[int, np.ndarray]
    detected: dict[int, np.ndarray]


def load_run(rdir: Path) -> RunRecords:
    traj = _read_csv(rdir / "trajectory.csv", TRAJECTORY_SCHEMA)
    osp = _read_csv(rdir / "ospa.csv", OSPA_SCHEMA)
    mode_cols = [c for c in traj[0] if c.startswith("p_mode")]
    true_pos = np.array([[float(r["true_x"]), float(r["true_y"])] for r in traj])
    est_pos = np.array([[float(r["est_x"]), float(r["est_y"])] for r in traj])
    pmf = np.array([[float(r[c]) for c in mode_cols] for r in traj])
    anchors = [int(c[len("ospa_pa") :]) for c in osp[0] if c.startswith("ospa_pa")]
    ospa = {j: np.array([float(r[f"ospa_pa{j}"]) for r in osp]) for j in anchors}
    detected = {j: np.array([int(r[f"detected_pa{j}"]) for r in osp]) for j in anchors}
    return RunRecords(true_pos, est_pos, pmf, ospa, detected)


def load_runs(out_dir) -> list[RunRecords]:
    out = Path(out_dir)
    rdirs = sorted(p for p in out.glob("run_*") if p.is_dir())
    if not rdirs:
        raise HarnessError(f"no run directories in {out}")
    return [load_run(d) for d in rdirs]


def _write_table(path: Path, schema: str, header, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def evaluate(out_dir) -> dict:
    """Aggregate all runs in ``out_dir`` into metric tables and a summary."""
    out = Path(out_dir)
    scen_path = out / "scenario.yaml"
    if not scen_path.is_file():
        raise HarnessError(f"missing artifact {scen_path}")
    scenario = load_scenario(scen_path)
    runs = load_runs(out)
    T = len(runs[0].true_pos)
    if any(len(r.true_pos) != T for r in runs):
        raise HarnessError("runs have different lengths")

    errors, per_step = metrics.rmse([r.est_pos for r in runs], [r.true_pos for r in runs])
    _write_table(
        out / "rmse.csv", RMSE_SCHEMA, ["step", "rmse"] + [f"error_run{i}" for i in range(len(runs))],
        [[n, _f(per_step[n])] + [_f(e) for e in errors[:, n]] for n in range(T)],
    )
    final_mospa = {}
    for j in runs[0].ospa:
        m = metrics.mospa([r.ospa[j] for r in runs])
        final_mospa[j] = float(m[-1])
        _write_table(out / f"mospa_pa{j}.csv", MOSPA_SCHEMA, ["step", "mospa"], [[n, _f(m[n])] for n in range(T)])
    belief = metrics.average_mode_belief([r.mode_pmf for r in runs])
    q = belief.shape[1]
    _write_table(
        out / "mode_belief.csv", MODE_SCHEMA, ["step"] + [f"p_mode{i + 1}" for i in range(q)],
        [[n] + [_f(v) for v in belief[n]] for n in range(T)],
    )

    true_counts = {a.anchor_id: len(scenario.visible_vas(a)) for a in scenario.anchors}
    final_counts = [{j: int(r.detected[j][-1]) for j in r.detected} for r in runs]
    summary = {
        "schema": SUMMARY_SCHEMA,
        "runs": len(runs),
        "steps": T,
        "median_rmse": float(np.median(per_step)),
        "max_rmse": float(np.max(per_step)),
        "run_rmse": [float(np.sqrt(np.mean(e**2))) for e in errors],
        "final_mospa": {str(j): v for j, v in final_mospa.items()},
        "true_feature_counts": {str(j): v for j, v in true_counts.items()},
        "final_detected_counts": [{str(j): v for j, v in c.items()} for c in final_counts],
    }
    if scenario.turn_windows:
        straights = metrics.straight_segments(T, scenario.turn_windows)
        summary["turn_windows"] = [list(w) for w in scenario.turn_windows]
        summary["mean_belief_turns"] = [metrics.window_mean(belief[:, i], scenario.turn_windows) for i in range(q)]
        summary["mean_belief_straights"] = [metrics.window_mean(belief[:, i], straights) for i in range(q)]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def rmse_after(out_dir, start_step: int) -> np.ndarray:
    """Per-run RMSE over steps ``n > start_step``."""
    runs = load_runs(out_dir)
    errs, _ = metrics.rmse([r.est_pos for r in runs], [r.true_pos for r in runs])
    return np.sqrt(np.mean(errs[:, start_step + 1 :] ** 2, axis=1))
