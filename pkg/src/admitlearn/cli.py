"""Command line entry point: ``admitlearn <offline|run|sweep|forces|report> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import SuiteConfig, load_suite, resolve_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
DEFAULT_WEIGHTS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def _suite(args) -> SuiteConfig:
    cfg = load_suite(resolve_config(args.config))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
        changes["sim"] = cfg.sim.perturbed(seed=args.seed)
        changes["real"] = cfg.real.perturbed(seed=args.seed)
    if args.episodes is not None:
        if args.episodes < 1:
            raise ConfigError("--episodes must be at least 1")
        changes["episodes"] = args.episodes
    return cfg.with_changes(**changes) if changes else cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_offline(args) -> int:
    from .experiments import offline_gains

    cfg = _suite(args).with_changes(gains=None)
    params, info = offline_gains(cfg, _out_dir(args))
    print(json.dumps({"task": cfg.task, "m": params.m.tolist(), "k": params.k.tolist(),
                      "d": params.d.tolist(), "search": info}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiments import format_table, run_suite

    result = run_suite(_suite(args), _out_dir(args), traces=not args.no_traces)
    print(format_table([r.as_dict() for r in result.rows]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import format_table, weight_sweep

    ws = [float(w) for w in args.weights.split(",")] if args.weights else list(DEFAULT_WEIGHTS)
    if any(not 0.0 <= w <= 1.0 for w in ws):
        raise ConfigError("weights must lie in [0, 1]")
    result = weight_sweep(_suite(args), ws, _out_dir(args))
    print(format_table([r.as_dict() for r in result.rows]))
    return EXIT_OK


def cmd_forces(args) -> int:
    from .experiments import compare_force_models, load_report

    out = _out_dir(args)
    compare_force_models(_suite(args), out)
    print(load_report(out))
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiments import load_report

    try:
        print(load_report(args.out_dir))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="admitlearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="suite YAML file, or a bundled name: wall, peg, pivot")
            p.add_argument("--seed", type=int, default=None, help="override the suite seed")
            p.add_argument("--episodes", type=int, default=None, help="override the episode count")
        p.add_argument("--out-dir", default="results", help="output directory (default: results)")
        return p

    common(sub.add_parser("offline", help="search offline gains in the nominal simulator")).set_defaults(
        func=cmd_offline)
    run = common(sub.add_parser("run", help="compare methods in the perturbed environment"))
    run.add_argument("--no-traces", action="store_true", help="skip per-episode trace CSVs")
    run.set_defaults(func=cmd_run)
    sweep = common(sub.add_parser("sweep", help="ablate the cost weight w"))
    sweep.add_argument("--weights", default=None, help="comma-separated w values (default 0,0.2,...,1)")
    sweep.set_defaults(func=cmd_sweep)
    common(sub.add_parser("forces", help="record & replay versus a fitted linear force model")).set_defaults(
        func=cmd_forces)
    common(sub.add_parser("report", help="print tables from an output directory"),
           needs_config=False).set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
