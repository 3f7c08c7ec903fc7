"""Command line entry point: ``run``, ``sweep`` and ``verify-bound``.

Exit codes: 0 success, 1 bound check failed, 2 bad configuration,
3 numerical failure, 4 file-system error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics, runner
from .config import ConfigError, parse_config, tomllib, with_overrides
from .runner import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK

EXIT_BOUND = 1

# flag -> dotted config key
RUN_FLAGS = {
    "seed": "seed",
    "out_dir": "out_dir",
    "attack": "attack.method",
    "aggregation": "aggregation.method",
    "neurons": "attack.num_neurons",
    "scheme": "attack.scheme",
    "attackers": "partition.attackers",
}


def parse_value(text: str):
    """Read a sweep value with TOML scalar rules; bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_axis(text: str) -> tuple[str, list]:
    key, sep, values = text.partition("=")
    if not sep or not key or not values:
        raise argparse.ArgumentTypeError(f"expected key=v1,v2,... but got {text!r}")
    return key.strip(), [parse_value(v.strip()) for v in values.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delphi-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir")
    run.add_argument("--attack", choices=["none", "bo", "lstr"])
    run.add_argument("--aggregation", choices=["fedavg", "krum"])
    run.add_argument("--neurons", type=int)
    run.add_argument("--scheme", choices=["fixed", "dynamic"])
    run.add_argument("--attackers", type=int)

    sweep = sub.add_parser("sweep", help="run the Cartesian product of sweep axes")
    sweep.add_argument("--config", required=True, type=Path)
    sweep.add_argument("--axis", required=True, action="append", type=parse_axis,
                       help="dotted key and comma-separated values, e.g. attack.method=none,bo")
    sweep.add_argument("--out", type=Path, help="output CSV (default <out_dir>/comparison.csv)")

    bound = sub.add_parser("verify-bound", help="check the effectiveness bound on random trials")
    bound.add_argument("--trials", type=int, default=1000)
    bound.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    overrides = {key: getattr(args, flag) for flag, key in RUN_FLAGS.items()
                 if getattr(args, flag) is not None}
    if overrides:
        cfg = with_overrides(cfg, overrides)
    code = runner.run(cfg)
    if code == EXIT_OK:
        print(f"wrote {Path(cfg.out_dir) / 'metrics.csv'} ({cfg.rounds} rounds)")
    return code


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    axes = dict(args.axis)
    cells = runner.expand_axes(cfg, axes)
    out = args.out or Path(cfg.out_dir) / "comparison.csv"
    try:
        path = runner.emit_comparison([c for _, c in cells], out, axes=list(axes))
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {path} ({len(cells)} cells)")
    return EXIT_OK


def _cmd_verify_bound(args) -> int:
    if args.trials < 1:
        print("--trials must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    report = metrics.verify_bound_derivation(args.trials, args.seed)
    print(f"{report.passed}/{report.trials} trials within the bound "
          f"(largest lhs/rhs = {report.max_ratio:.6f})")
    return EXIT_OK if report.all_passed else EXIT_BOUND


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "verify-bound": _cmd_verify_bound}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
