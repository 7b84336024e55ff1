"""Experiment configuration files.

The format is INI as read by :mod:`configparser`. Every value is parsed as
JSON when possible and kept as a string otherwise, so ``trials = 10``,
``eig_range = [1, 2]`` and ``kind = quadratic`` all work. Recognised sections:

``[experiment]``
    ``trials``, ``root_seed``, ``budget`` (scaled queries), ``log_stride``,
    ``output_prefix``, ``label``, ``workers``.
``[problem]``
    ``kind`` (``quadratic`` or ``hyper_rep``) plus the generator arguments of
    that kind, or the explicit data fields of its spec.
``[algorithm]``
    ``name`` (``jh`` or ``penalty``), ``schedule`` (``plugin`` or ``manual``),
    ``eps`` and any config field (``n_outer``, ``alpha``, ``t_k``, ...) which
    then replaces the plug-in value. ``eta``/``mu`` set all four radii.
``[algorithm.tuning]``
    Keyword arguments of the schedule builder (``c_alpha``, ``t_cap``, ...).
``[algorithm.hessinv]``
    Tuning of the Hessian-inverse schedule (``c_gamma``, ``c_T``, ``c_mu``).

Command-line overrides use ``section.key=value``; the section is everything
before the last dot.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field

from ..core import ConfigError, SmoothingParams
from ..problems import HyperRepSpec, QuadraticBilevelSpec, make_hyper_rep, make_quadratic
from ..solver_jh import JHConfig, jh_schedule
from ..solver_penalty import PenaltyConfig, penalty_schedule

PROBLEM_KINDS = ("quadratic", "hyper_rep")
ALGORITHMS = ("jh", "penalty")


def parse_value(text: str):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return text


def format_value(value) -> str:
    return value if isinstance(value, str) else json.dumps(value)


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: dict
    tuning: dict = field(default_factory=dict)
    hessinv: dict = field(default_factory=dict)
    trials: int = 1
    root_seed: int = 0
    budget: int | None = None
    log_stride: int = 1
    output_prefix: str = "experiment"
    label: str = ""
    workers: int = 1

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.budget is not None and not self.budget > 0:
            raise ConfigError("budget must be positive when given")
        if int(self.log_stride) < 1:
            raise ConfigError("log_stride must be >= 1")
        if self.problem.get("kind") not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}")
        if self.algorithm.get("name") not in ALGORITHMS:
            raise ConfigError(f"algorithm.name must be one of {ALGORITHMS}")
        if not self.label:
            self.label = self.algorithm["name"]

    @property
    def algorithm_name(self) -> str:
        return self.algorithm["name"]

    def to_sections(self) -> dict:
        exp = {
            "trials": self.trials,
            "root_seed": self.root_seed,
            "log_stride": self.log_stride,
            "output_prefix": self.output_prefix,
            "label": self.label,
            "workers": self.workers,
        }
        if self.budget is not None:
            exp["budget"] = self.budget
        sections = {"experiment": exp, "problem": dict(self.problem), "algorithm": dict(self.algorithm)}
        if self.tuning:
            sections["algorithm.tuning"] = dict(self.tuning)
        if self.hessinv:
            sections["algorithm.hessinv"] = dict(self.hessinv)
        return sections

    def write(self, path) -> None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name, values in self.to_sections().items():
            cp[name] = {k: format_value(v) for k, v in values.items()}
        with open(path, "w", newline="\n") as fh:
            cp.write(fh)


def _apply_override(sections: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    key, value = item.split("=", 1)
    if "." not in key:
        raise ConfigError(f"override key {key!r} needs a section prefix")
    section, name = key.rsplit(".", 1)
    sections.setdefault(section.strip(), {})[name.strip()] = parse_value(value.strip())


def config_from_sections(sections: dict) -> ExperimentConfig:
    known = {"experiment", "problem", "algorithm", "algorithm.tuning", "algorithm.hessinv"}
    unknown = set(sections) - known - {"DEFAULT"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if "problem" not in sections or "algorithm" not in sections:
        raise ConfigError("config needs [problem] and [algorithm] sections")
    exp = dict(sections.get("experiment", {}))
    allowed = {"trials", "root_seed", "budget", "log_stride", "output_prefix", "label", "workers"}
    bad = set(exp) - allowed
    if bad:
        raise ConfigError(f"unknown experiment keys: {sorted(bad)}")
    try:
        return ExperimentConfig(
            problem=dict(sections["problem"]),
            algorithm=dict(sections["algorithm"]),
            tuning=dict(sections.get("algorithm.tuning", {})),
            hessinv=dict(sections.get("algorithm.hessinv", {})),
            **exp,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=()) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        try:
            cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    sections = {name: {k: parse_value(v) for k, v in cp[name].items()} for name in cp.sections()}
    for item in overrides:
        _apply_override(sections, item)
    return config_from_sections(sections)


def build_problem(spec: dict):
    """Fresh problem instance (own query counters) from a ``[problem]`` section."""
    args = dict(spec)
    kind = args.pop("kind")
    try:
        if kind == "quadratic":
            if "B" in args:
                return make_quadratic(QuadraticBilevelSpec.from_dict(args))
            n, m, seed = args.pop("n"), args.pop("m"), args.pop("seed", 0)
            for key in ("eig_range", "coupling"):
                if key in args:
                    args[key] = tuple(args[key])
            return make_quadratic(QuadraticBilevelSpec.random(n, m, seed, **args))
        if "chi1" in args:
            return make_hyper_rep(HyperRepSpec.from_dict(args))
        d_in, d_out = args.pop("d_in"), args.pop("d_out")
        n1, n2, seed = args.pop("n1"), args.pop("n2"), args.pop("seed", 0)
        spec_obj, _, _ = HyperRepSpec.planted(d_in, d_out, n1, n2, seed, **args)
        return make_hyper_rep(spec_obj)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid {kind} problem section: {exc}") from exc


_JH_FIELDS = ("n_outer", "alpha", "beta", "t_k", "s_k", "b_k", "hessinv_beta", "warm_start")
_PEN_FIELDS = ("n_outer", "alpha", "beta", "t_k", "s_k", "lam", "warm_start", "inner_f_point", "outer_form")


def _smoothing_override(alg: dict, base: SmoothingParams | None) -> SmoothingParams | None:
    keys = {"eta", "mu", "eta1", "mu1", "eta2", "mu2"}
    if not keys & set(alg):
        return base
    vals = {} if base is None else {"eta1": base.eta1, "mu1": base.mu1, "eta2": base.eta2, "mu2": base.mu2}
    if "eta" in alg:
        vals["eta1"] = vals["eta2"] = alg["eta"]
    if "mu" in alg:
        vals["mu1"] = vals["mu2"] = alg["mu"]
    for k in ("eta1", "mu1", "eta2", "mu2"):
        if k in alg:
            vals[k] = alg[k]
    missing = {"eta1", "mu1", "eta2", "mu2"} - set(vals)
    if missing:
        raise ConfigError(f"smoothing radii missing: {sorted(missing)}")
    return SmoothingParams(**vals)


def build_solver_config(cfg: ExperimentConfig, problem):
    """Solver config from the plug-in schedule with explicit fields applied on top."""
    alg = dict(cfg.algorithm)
    name = alg.get("name")
    mode = alg.get("schedule", "plugin")
    fields = _JH_FIELDS if name == "jh" else _PEN_FIELDS
    try:
        if mode == "plugin":
            eps = alg.get("eps", 0.1)
            if name == "jh":
                base = jh_schedule(problem.n, problem.m, eps, problem.constants, hessinv_tuning=cfg.hessinv, **cfg.tuning)
            else:
                base = penalty_schedule(problem.n, problem.m, eps, problem.constants, **cfg.tuning)
            values = {f: getattr(base, f) for f in fields}
            smoothing = base.smoothing
        elif mode == "manual":
            values, smoothing = {}, None
        else:
            raise ConfigError(f"algorithm.schedule must be 'plugin' or 'manual', got {mode!r}")
        for f in fields:
            if f in alg:
                values[f] = alg[f]
        smoothing = _smoothing_override(alg, smoothing)
        if smoothing is None:
            raise ConfigError("manual schedule needs smoothing radii")
        cls = JHConfig if name == "jh" else PenaltyConfig
        return cls(smoothing=smoothing, log_stride=cfg.log_stride, **values)
    except TypeError as exc:
        raise ConfigError(f"invalid algorithm section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
