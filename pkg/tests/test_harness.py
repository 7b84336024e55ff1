import hashlib
from dataclasses import replace

import pytest

from zobilevel import ConfigError
from zobilevel.harness import (
    AGGREGATE_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentConfig,
    aggregate_trials,
    build_problem,
    build_solver_config,
    compare,
    emit_svg,
    load_config,
    run_experiment,
)
from zobilevel.harness.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from zobilevel.harness.runner import TrialResult

INI = """\
[experiment]
trials = 2
root_seed = 3
output_prefix = {prefix}

[problem]
kind = quadratic
n = 3
m = 3
seed = 1
noise_sigma_f = 0.01

[algorithm]
name = penalty
schedule = manual
n_outer = 4
alpha = 0.05
beta = 0.05
t_k = 10
s_k = 10
lam = 20.0
eta = 1e-3
mu = 1e-3
"""


def write_ini(tmp_path, name="exp.ini", prefix=None):
    p = tmp_path / name
    p.write_text(INI.format(prefix=prefix or str(tmp_path / "out")))
    return p


def small_config(tmp_path, **kw):
    cfg = load_config(write_ini(tmp_path))
    return replace(cfg, **kw)


def test_config_parse_and_override(tmp_path):
    cfg = load_config(write_ini(tmp_path), ["algorithm.alpha=0.2", "problem.n=5"])
    assert cfg.trials == 2 and cfg.root_seed == 3
    assert cfg.algorithm["alpha"] == 0.2 and cfg.problem["n"] == 5
    sc = build_solver_config(cfg, build_problem(cfg.problem))
    assert sc.alpha == 0.2 and sc.lam == 20.0


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path), ["algorithm.name=sgd"])
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path), ["noprefix=1"])
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path), ["experiment.trials=0"])


def test_config_write_roundtrip(tmp_path):
    cfg = load_config(write_ini(tmp_path))
    cfg.write(tmp_path / "back.ini")
    assert load_config(tmp_path / "back.ini") == cfg


def test_plugin_schedule_builds(tmp_path):
    cfg = load_config(write_ini(tmp_path), ["algorithm.schedule=plugin", "algorithm.eps=0.1", "algorithm.tuning.n_outer=2"])
    sc = build_solver_config(cfg, build_problem(cfg.problem))
    assert sc.n_outer == 4  # explicit field wins over the schedule


def test_single_trial_zero_outer_band_collapses(tmp_path):
    cfg = small_config(tmp_path, trials=1, algorithm={**small_config(tmp_path).algorithm, "n_outer": 0})
    res = run_experiment(cfg, write=False)
    assert len(res.aggregate) == 1
    row = res.aggregate[0]
    assert row["min_norm"] == row["mean_norm"] == row["max_norm"]


def test_csv_schema_and_rerun_bytes(tmp_path):
    cfg = small_config(tmp_path)
    first = run_experiment(cfg)
    digests = {k: hashlib.md5(open(p, "rb").read()).hexdigest() for k, p in first.paths.items()}
    second = run_experiment(cfg)
    assert {k: hashlib.md5(open(p, "rb").read()).hexdigest() for k, p in second.paths.items()} == digests
    header = open(first.paths["trial000"]).readline().strip().split(",")
    assert tuple(header) == TRIAL_COLUMNS
    header = open(first.paths["aggregate"]).readline().strip().split(",")
    assert tuple(header) == AGGREGATE_COLUMNS


def test_workers_do_not_change_output(tmp_path):
    a = run_experiment(small_config(tmp_path), write=False).aggregate
    b = run_experiment(small_config(tmp_path, workers=2), write=False).aggregate
    assert a == b


def test_aggregate_carries_last_observation():
    t0 = TrialResult(0, [{"scaled_queries": 0, "hypergrad_norm": 4.0}, {"scaled_queries": 10, "hypergrad_norm": 2.0}])
    t1 = TrialResult(1, [{"scaled_queries": 0, "hypergrad_norm": 2.0}, {"scaled_queries": 5, "hypergrad_norm": 1.0}])
    rows = aggregate_trials([t0, t1])
    assert [r["scaled_queries"] for r in rows] == [0, 5, 10]
    assert rows[1]["mean_norm"] == 2.5 and rows[2]["max_norm"] == 2.0


def test_compare_rejects_different_problems(tmp_path):
    a = small_config(tmp_path, label="a")
    b = replace(a, label="b", problem={**a.problem, "seed": 9})
    with pytest.raises(ConfigError):
        compare([a, b])


def test_compare_same_config_two_labels(tmp_path):
    a = small_config(tmp_path, label="a")
    b = replace(a, label="b")
    merged = compare([a, b], tmp_path / "merged.csv")
    ra = [{k: v for k, v in r.items() if k != "label"} for r in merged if r["label"] == "a"]
    rb = [{k: v for k, v in r.items() if k != "label"} for r in merged if r["label"] == "b"]
    assert ra == rb and ra


def curve(values):
    return [{"scaled_queries": i * 10.0, "mean_norm": v, "min_norm": v, "max_norm": v} for i, v in enumerate(values)]


def test_svg_flat_curve():
    svg = emit_svg([("flat", curve([1.0, 1.0, 1.0]))])
    assert svg.count("<polyline") == 1


def test_svg_two_curves_distinct_and_deterministic():
    curves = [("jh", curve([3.0, 2.0, 1.0])), ("penalty", curve([3.0, 1.5, 0.5]))]
    svg = emit_svg(curves, {"log_y": True})
    assert svg == emit_svg(curves, {"log_y": True})
    assert "jh" in svg and "penalty" in svg
    assert "#1f77b4" in svg and "#d62728" in svg


def test_svg_empty_raises():
    with pytest.raises(ConfigError):
        emit_svg([("none", [])])


def test_cli_exit_codes(tmp_path, capsys):
    ini = write_ini(tmp_path)
    assert main(["run", "--config", str(ini)]) == EXIT_OK
    agg = capsys.readouterr().out.strip()
    assert main(["plot", "--in", agg, "--out", str(tmp_path / "p.svg")]) == EXIT_OK
    assert main(["run", "--config", str(ini), "--override", "algorithm.name=bogus"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == EXIT_IO
    assert main(["validate", "--json", str(tmp_path / "v.json")]) == EXIT_OK
    assert (tmp_path / "v.json").exists()
