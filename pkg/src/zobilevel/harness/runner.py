"""Multi-trial execution, CSV output and aggregation across trials."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..core import ConfigError, NumericError, RngStream
from ..solver_jh import run_jh
from ..solver_penalty import run_penalty
from .config import ExperimentConfig, build_problem, build_solver_config

log = logging.getLogger(__name__)

TRIAL_COLUMNS = ("trial", "k", "f_evals", "g_evals", "scaled_queries", "hypergrad_norm", "surrogate_norm")
AGGREGATE_COLUMNS = ("scaled_queries", "mean_norm", "min_norm", "max_norm", "n_trials")
MERGED_COLUMNS = ("algorithm", "label") + AGGREGATE_COLUMNS


def fmt(value) -> str:
    """Locale-free text for a CSV cell; ``None`` becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class TrialResult:
    trial: int
    rows: list
    status: str = "ok"
    message: str = ""


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list
    aggregate: list = field(default_factory=list)
    paths: dict = field(default_factory=dict)

    @property
    def all_diverged(self) -> bool:
        return all(t.status == "diverged" for t in self.trials)


def _trial_rows(trial, trace, scale):
    rows = []
    for r in trace.records:
        rows.append(
            {
                "trial": trial,
                "k": r.k,
                "f_evals": r.f_evals,
                "g_evals": r.g_evals,
                "scaled_queries": (r.f_evals + r.g_evals) * scale,
                "hypergrad_norm": r.hypergrad_norm,
                "surrogate_norm": r.surrogate_norm,
            }
        )
    return rows


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    """One trial on a fresh problem instance with streams derived from the trial index."""
    problem = build_problem(cfg.problem)
    solver_cfg = build_solver_config(cfg, problem)
    scale = problem.minibatch_rows
    budget = None if cfg.budget is None else math.ceil(cfg.budget / scale)
    stream = RngStream(int(cfg.root_seed)).derive("trial", trial)
    run = run_jh if cfg.algorithm_name == "jh" else run_penalty
    try:
        trace = run(problem, solver_cfg, stream, budget=budget)
    except NumericError as exc:
        trace = getattr(exc, "trace", None)
        rows = [] if trace is None else _trial_rows(trial, trace, scale)
        log.warning("trial %d diverged: %s", trial, exc)
        return TrialResult(trial, rows, "diverged", str(exc))
    return TrialResult(trial, _trial_rows(trial, trace, scale))


def aggregate_trials(trials) -> list:
    """Mean, min and max norm on the union query grid with last observation carried forward.

    Only records with a logged hypergradient norm enter. A checkpoint is
    emitted once every contributing trial has an observation at or before it.
    """
    series = []
    for t in trials:
        pts = [(r["scaled_queries"], r["hypergrad_norm"]) for r in t.rows if r["hypergrad_norm"] is not None]
        if pts:
            series.append(pts)
    if not series:
        return []
    grid = sorted({q for pts in series for q, _ in pts})
    out = []
    idx = [0] * len(series)
    for q in grid:
        vals = []
        for j, pts in enumerate(series):
            while idx[j] + 1 < len(pts) and pts[idx[j] + 1][0] <= q:
                idx[j] += 1
            if pts[idx[j]][0] <= q:
                vals.append(pts[idx[j]][1])
        if len(vals) < len(series):
            continue
        arr = np.asarray(vals)
        out.append(
            {
                "scaled_queries": q,
                "mean_norm": float(arr.mean()),
                "min_norm": float(arr.min()),
                "max_norm": float(arr.max()),
                "n_trials": len(vals),
            }
        )
    return out


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], str) else fmt(row[c]) for c in columns])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(cfg: ExperimentConfig, *, write: bool = True, svg: bool = False) -> ExperimentResult:
    """Run all trials, then write per-trial CSVs and the aggregate CSV.

    Files are ``{prefix}_trial{i:03d}.csv`` and ``{prefix}_aggregate.csv``
    (plus ``{prefix}.svg`` when ``svg`` is set).
    """
    # fail early on config errors before spawning trials
    build_solver_config(cfg, build_problem(cfg.problem))
    workers = max(1, int(cfg.workers))
    if workers == 1:
        trials = [run_trial(cfg, i) for i in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(lambda i: run_trial(cfg, i), range(cfg.trials)))
    result = ExperimentResult(cfg, trials, aggregate_trials(trials))
    if write:
        prefix = cfg.output_prefix
        for t in trials:
            p = f"{prefix}_trial{t.trial:03d}.csv"
            write_csv(p, TRIAL_COLUMNS, t.rows)
            result.paths[f"trial{t.trial:03d}"] = p
        p = f"{prefix}_aggregate.csv"
        write_csv(p, AGGREGATE_COLUMNS, result.aggregate)
        result.paths["aggregate"] = p
        if svg and result.aggregate:
            from .plot import emit_svg

            p = f"{prefix}.svg"
            Path(p).write_text(emit_svg([(cfg.label, result.aggregate)], {"log_y": True}))
            result.paths["svg"] = p
    return result


def _problem_key(cfg: ExperimentConfig):
    return repr(sorted(cfg.problem.items())), cfg.root_seed


def compare(cfgs, out_path=None, *, svg_path=None) -> list:
    """Run several configs on the same problem and seed; merged rows keyed by algorithm and label."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("compare needs at least one config")
    key = _problem_key(cfgs[0])
    for c in cfgs[1:]:
        if _problem_key(c) != key:
            raise ConfigError("compared configs must share the problem section and root_seed")
    labels = [c.label for c in cfgs]
    if len(set(labels)) != len(labels):
        raise ConfigError("compared configs need distinct labels")
    prefixes = [c.output_prefix for c in cfgs]
    if len(set(prefixes)) != len(prefixes):
        cfgs = [replace(c, output_prefix=f"{c.output_prefix}_{c.label}") for c in cfgs]
    merged, curves = [], []
    for c in cfgs:
        res = run_experiment(c)
        curves.append((c.label, res.aggregate))
        for row in res.aggregate:
            merged.append({"algorithm": c.algorithm_name, "label": c.label, **row})
    if out_path is not None:
        write_csv(out_path, MERGED_COLUMNS, merged)
    if svg_path is not None:
        from .plot import emit_svg

        Path(svg_path).write_text(emit_svg(curves, {"log_y": True}))
    return merged
