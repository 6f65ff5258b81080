import json

import numpy as np
import pytest

from mpslam import harness
from mpslam.cli import main
from mpslam.harness import HarnessError, RunConfig, evaluate, prepare_scenario, run, single_mode_params
from mpslam.scenario import build_default_scenario, load_scenario


@pytest.fixture(scope="module")
def out(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    run(RunConfig(runs=2, base_seed=5, out_dir=str(d), n_agent=300, n_feature=100))
    return d


def _csvs(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*.csv"))}


def test_artifacts_and_schemas(out):
    for name in ("rmse.csv", "mospa_pa1.csv", "mospa_pa2.csv", "mode_belief.csv", "summary.json", "config.json"):
        assert (out / name).is_file()
    for p, data in _csvs(out).items():
        assert data.startswith(b"# schema=mpslam-"), p
    rows = (out / "rmse.csv").read_text().splitlines()
    assert len(rows) == 2 + 160
    summary = json.loads((out / "summary.json").read_text())
    assert summary["true_feature_counts"] == {"1": 5, "2": 4}
    assert summary["runs"] == 2
    # run r uses seed base_seed + r
    assert json.loads((out / "config.json").read_text())["base_seed"] == 5


def test_evaluate_idempotent(out):
    before = _csvs(out)
    summary = (out / "summary.json").read_bytes()
    evaluate(out)
    assert _csvs(out) == before
    assert (out / "summary.json").read_bytes() == summary


def test_rerun_byte_identical(out, tmp_path):
    run(RunConfig(runs=2, base_seed=5, out_dir=str(tmp_path), n_agent=300, n_feature=100))
    assert _csvs(tmp_path) == _csvs(out)


def test_parallel_matches_serial(out, tmp_path):
    run(RunConfig(runs=2, base_seed=5, out_dir=str(tmp_path), n_agent=300, n_feature=100, jobs=2))
    assert _csvs(tmp_path) == _csvs(out)


def test_variants_share_measurements(out, tmp_path):
    run(RunConfig(runs=1, base_seed=5, out_dir=str(tmp_path), n_agent=300, n_feature=100, variant="single"))
    a = (out / "run_000" / "measurements.csv").read_bytes()
    assert (tmp_path / "run_000" / "measurements.csv").read_bytes() == a
    sc = load_scenario(tmp_path / "scenario.yaml")
    assert sc.filter.transition == ((1.0,),) and sc.filter.sigma_w == (0.0032,)


def test_default_config_values():
    sc = prepare_scenario(RunConfig())
    assert sc.runs == 10
    assert sc.filter.transition == ((0.99, 0.01), (0.01, 0.99))
    single = single_mode_params(sc.filter)
    assert single.num_modes == 1 and single.sigma_w == (0.0032,)


def test_run_seeds_independent_of_variant():
    a, _ = harness.run_seeds(3)
    b, _ = harness.run_seeds(3)
    assert a.random() == b.random()


def test_output_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv(harness.OUT_ENV, str(tmp_path / "env"))
    assert RunConfig().output_dir() == tmp_path / "env"
    assert RunConfig(out_dir="x").output_dir().name == "x"


def test_config_errors(tmp_path):
    with pytest.raises(HarnessError):
        RunConfig(variant="triple")
    with pytest.raises(HarnessError):
        RunConfig(runs=0)
    with pytest.raises(HarnessError):
        evaluate(tmp_path)
    with pytest.raises(HarnessError):
        prepare_scenario(RunConfig(n_agent=10, n_feature=50))


def test_cli_scenario_dump_round_trip(tmp_path, capsys):
    path = tmp_path / "s.yaml"
    assert main(["scenario-dump", "--out", str(path)]) == 0
    sc = load_scenario(path)
    np.testing.assert_array_equal(sc.track, build_default_scenario().track)
    assert main(["scenario-dump"]) == 0
    assert "mpslam-scenario/1" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["evaluate", str(tmp_path)]) == 2
    assert main(["run", "--scenario", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--variant", "triple"])
    assert "error" in capsys.readouterr().err


def test_cli_run_and_evaluate(tmp_path, capsys):
    sc_path = tmp_path / "short.yaml"
    main(["scenario-dump", "--out", str(sc_path)])
    assert main(["run", "--scenario", str(sc_path), "--runs", "1", "--particles", "200",
                 "--feature-particles", "50", "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert main(["evaluate", str(tmp_path / "o")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 160


def test_cli_oracle_da(capsys):
    assert main(["oracle", "da"]) == 0
    assert capsys.readouterr().out.startswith("PASS da")
