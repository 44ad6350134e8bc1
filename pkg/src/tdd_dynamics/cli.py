"""Command-line entry point: ``tdd-dynamics run|validate|analyze|compare``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import harness
from .errors import ConfigError, TddDynamicsError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPLOSION = 3


def _run_one(path):
    """Worker for batch runs; returns (path, exit code, message)."""
    try:
        summary = harness.run_scenario(harness.load_config(path))
    except ConfigError as exc:
        return str(path), EXIT_CONFIG, f"config error: {exc}"
    code = EXIT_EXPLOSION if summary.truncated else EXIT_OK
    return str(path), code, _summary_line(summary)


def _summary_line(s) -> str:
    mean = "-" if s.mean_sigma is None else f"{s.mean_sigma:.4f}"
    line = (
        f"{s.name}: steps={s.steps_completed} classes={s.final_class_count} "
        f"mean_sigma={mean} classification={s.classification}"
    )
    if s.twin_lambda is not None:
        line += f" twin_lambda={s.twin_lambda:.4f}"
    if s.truncated:
        line += f" truncated=true ({s.error})"
    return line


def cmd_run(args) -> int:
    if args.all:
        configs = sorted(Path(args.target).glob("*.conf"))
        if not configs:
            print(f"no scenario configs in {args.target}", file=sys.stderr)
            return EXIT_CONFIG
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, configs))
        worst = EXIT_OK
        for path, code, msg in results:
            print(f"[{code}] {path}: {msg}")
            worst = max(worst, code)
        return worst
    path, code, msg = _run_one(args.target)
    print(msg, file=sys.stderr if code == EXIT_CONFIG else sys.stdout)
    return code


def cmd_validate(args) -> int:
    table = harness.read_trace(args.csv)
    result = harness.validate_predictions(table, args.regime, args.tol, args.warmup)
    print(result.format())
    return EXIT_OK if result.passed else 1


def _params(args):
    kw = {}
    for name in ("embedding_dim", "delay", "epsilon", "horizon", "min_neighbors"):
        value = getattr(args, name)
        if value is not None:
            kw[name] = value
    try:
        return harness.KantzParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_analyze(args) -> int:
    if args.demo:
        trace = harness.demo_trace(args.demo, args.length)
    elif args.csv:
        trace = harness.read_trace(args.csv).sigma_trace()
    else:
        raise ConfigError("analyze needs a CSV path or --demo")
    report = harness.analyze(trace, _params(args), args.svg)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        harness.atomic_write(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = harness.read_trace(args.csv_a), harness.read_trace(args.csv_b)
    print(harness.format_comparison(harness.compare_traces(a, b)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdd-dynamics",
        description="Simulate and analyse iterated test-driven development dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config, or every config in a directory")
    p.add_argument("target", help="config file, or directory with --all")
    p.add_argument("--all", action="store_true", help="run every *.conf in TARGET")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers for --all")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="compare a trace with the closed-form estimates")
    p.add_argument("csv")
    p.add_argument("--regime", required=True, choices=(harness.UNCOUPLED, harness.COUPLED))
    p.add_argument("--tol", type=float, default=harness.DEFAULT_TOL)
    p.add_argument("--warmup", type=int, default=harness.DEFAULT_WARMUP)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="classify a trace and estimate its Lyapunov exponent")
    p.add_argument("csv", nargs="?")
    p.add_argument("--svg", help="write a line plot of the trace")
    p.add_argument("--demo", choices=sorted(harness.DEMOS), help="analyse a synthetic series")
    p.add_argument("--length", type=int, default=2000, help="demo series length")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--min-neighbors", dest="min_neighbors", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="twin-divergence table for two traces")
    p.add_argument("csv_a")
    p.add_argument("csv_b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except TddDynamicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
