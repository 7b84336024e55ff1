"""Command-line entry point: ``run``, ``compare``, ``plot`` and ``validate``.

Exit codes: 0 success, 1 failed validation checks, 2 configuration error,
3 numeric divergence in every trial, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..core import ConfigError
from .config import load_config

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

log = logging.getLogger("zobilevel")


def _cmd_run(args) -> int:
    from .runner import run_experiment

    cfg = load_config(args.config, args.override)
    if args.workers is not None:
        cfg.workers = args.workers
    res = run_experiment(cfg, svg=args.svg)
    for t in res.trials:
        if t.status != "ok":
            log.warning("trial %d: %s (%s)", t.trial, t.status, t.message)
    print(res.paths.get("aggregate", ""))
    return EXIT_DIVERGED if res.all_diverged else EXIT_OK


def _cmd_compare(args) -> int:
    from .runner import compare

    cfgs = [load_config(p, args.override) for p in args.configs]
    out = args.out or f"{cfgs[0].output_prefix}_compare.csv"
    compare(cfgs, out, svg_path=args.svg)
    print(out)
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plot import curves_from_csv, emit_svg

    curves = curves_from_csv(args.inputs)
    axes = {"log_y": args.log_y, "title": args.title or ""}
    Path(args.out).write_text(emit_svg(curves, axes))
    print(args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    from ..validation import run_validation_suite

    results = run_validation_suite(seed=args.seed, M=args.draws)
    records = [r.to_dict() for r in results]
    if args.json:
        Path(args.json).write_text(json.dumps(records, indent=2) + "\n")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} measured={r.measured:.6g} bound={r.bound:.6g}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zobilevel", description="Zeroth-order bilevel optimization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--svg", action="store_true", help="also write {prefix}.svg")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="run several configs and merge their aggregates")
    c.add_argument("--configs", nargs="+", required=True)
    c.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    c.add_argument("--out", default=None)
    c.add_argument("--svg", default=None)
    c.set_defaults(func=_cmd_compare)

    pl = sub.add_parser("plot", help="render aggregate CSVs to SVG")
    pl.add_argument("--in", dest="inputs", nargs="+", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--log-y", action="store_true")
    pl.add_argument("--title", default=None)
    pl.set_defaults(func=_cmd_plot)

    v = sub.add_parser("validate", help="run the validation checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--draws", type=int, default=20_000)
    v.add_argument("--json", default=None, help="write the machine-readable report here")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
