"""Command-line entry point: ``mpslam {run,evaluate,scenario-dump,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import oracles
from .harness import VARIANTS, HarnessError, RunConfig, evaluate, run
from .resampling import FilterDivergenceError
from .scenario import ScenarioError, build_default_scenario, dump_scenario


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpslam", description="Multipath BP-SLAM with IMM agent dynamics")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate and filter several runs, then evaluate")
    r.add_argument("--scenario", help="scenario YAML (default: built-in scenario)")
    r.add_argument("--runs", type=int, help="number of runs (default: scenario value, 10)")
    r.add_argument("--seed", type=int, help="base seed; run r uses seed + r")
    r.add_argument("--variant", choices=VARIANTS, default="imm")
    r.add_argument("--out", help="output directory (default: $MPSLAM_OUT or ./mpslam_out)")
    r.add_argument("--particles", type=int, help="agent particle count")
    r.add_argument("--feature-particles", type=int, help="particles per feature")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    e = sub.add_parser("evaluate", help="recompute metric tables of an output directory")
    e.add_argument("out", help="output directory of a previous run")

    d = sub.add_parser("scenario-dump", help="print the built-in scenario as YAML")
    d.add_argument("--out", help="write to this file instead of stdout")

    o = sub.add_parser("oracle", help="run the reference checks")
    o.add_argument("which", nargs="?", choices=("da", "ospa", "imm", "all"), default="all")
    o.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = RunConfig(
                scenario_path=args.scenario,
                runs=args.runs,
                base_seed=args.seed,
                out_dir=args.out,
                variant=args.variant,
                n_agent=args.particles,
                n_feature=args.feature_particles,
                jobs=args.jobs,
            )
            out = run(cfg)
            print(f"results written to {out}")
        elif args.command == "evaluate":
            summary = evaluate(args.out)
            print(json.dumps(summary, indent=2, sort_keys=True))
        elif args.command == "scenario-dump":
            text = dump_scenario(build_default_scenario())
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        elif args.command == "oracle":
            ok = True
            for name in ("da", "ospa", "imm") if args.which == "all" else (args.which,):
                passed, message = oracles.CHECKS[name](args.seed)
                ok &= passed
                print(f"{'PASS' if passed else 'FAIL'} {name}: {message}")
            return 0 if ok else 1
    except (HarnessError, ScenarioError, FilterDivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
