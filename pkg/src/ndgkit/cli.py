"""``ndgkit`` command line: run a benchmark experiment and emit its report.

Exit status is 0 when every row succeeded, 1 when any row failed (or the
report could not be written) and 2 on a configuration error.
"""

import argparse
import logging
import sys

from .bench.config import build_spec, load_config
from .bench.experiments import run_experiment
from .bench.report import FAILED, emit_report
from .errors import ConfigError

COMMANDS = ("converge", "cost", "fit", "timing", "scale", "energy", "simulate")


def _common(p):
    p.add_argument("--config", help="YAML file with experiment settings")
    p.add_argument("--equation", help="advection or euler (comma list for several)")
    p.add_argument("--dim", type=int)
    p.add_argument("--order", dest="orders", help="nodes per cell per axis, comma list")
    p.add_argument("--rk", choices=("rk3", "rk4", "rk6"))
    p.add_argument("--cells", help="cells per axis, comma list")
    p.add_argument("--weak-cells", help="cells per axis per worker for weak scaling")
    p.add_argument("--nk", type=int, help="highest sine mode of the initial profile")
    p.add_argument("--seed", type=int)
    p.add_argument("--cfl", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--workers", help="worker counts, comma list")
    p.add_argument("--transport", choices=("inprocess", "socket"))
    p.add_argument("--steps", type=int, help="fixed step count")
    p.add_argument("--power-watts", type=float, help="device power rating for energy estimates")
    p.add_argument("--targets", help="target errors for fit, comma list")
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.add_argument("--dump", help="simulate: write the final field here")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="ndgkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _common(sub.add_parser(name))
    return parser


_KEYS = ("equation", "dim", "orders", "rk", "cells", "weak_cells", "nk", "seed", "cfl",
         "t_end", "workers", "transport", "steps", "power_watts", "targets", "backend", "dump")


def spec_from_args(args):
    file_values = load_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _KEYS}
    overrides["experiment"] = args.command
    return build_spec(file_values, overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except ConfigError as exc:
        print(f"ndgkit: config error: {exc}", file=sys.stderr)
        return 2
    fixed = args.steps if args.command == "simulate" else None
    report = run_experiment(spec, steps=fixed)
    try:
        emit_report(report, args.format, args.out or sys.stdout)
    except (OSError, ValueError) as exc:
        print(f"ndgkit: cannot write report: {exc}", file=sys.stderr)
        return 1
    failed = [r for r in report.rows if r["status"] == FAILED]
    if failed:
        print(f"ndgkit: {len(failed)} row(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
