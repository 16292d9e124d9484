"""Command line entry point ``rotor-gibbs``.

Usage::

    rotor-gibbs <experiment> --config FILE [--out DIR] [--seed N] [--threads N]
    rotor-gibbs plot-data INPUT... [--out DIR]

Exit status: 0 success, 1 a check inside the experiment failed, 2 usage
error, 3 the run aborted on a numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import UsageError
from .config import EXPERIMENTS, load_config
from .experiments import run_experiment
from .plotdata import emit_plot_data

__all__ = ["main"]


def _parser():
    ap = argparse.ArgumentParser(prog="rotor-gibbs", description="Rotor Gibbs experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="TOML config file")
        sp.add_argument("--out", default=None, help="output directory (default: $ROTOR_GIBBS_OUT/<experiment>)")
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (recorded; runs are sequential)")
    pp = sub.add_parser("plot-data", help="convert CSV output to .dat files")
    pp.add_argument("inputs", nargs="+")
    pp.add_argument("--out", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot-data":
            for path in emit_plot_data(args.inputs, args.out):
                print(path)
            return 0
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        record = run_experiment(cfg, args.out, args.threads)
    except UsageError as exc:
        print(f"rotor-gibbs: error: {exc}", file=sys.stderr)
        return 2
    for c in record.checks:
        mark = {True: "PASS", False: "FAIL", None: "SKIP"}[c["passed"]]
        print(f"{mark} {c['name']} {c['detail']}".rstrip())
    print(f"{record.experiment}: {record.status} -> {record.out_dir}")
    if record.status == "error":
        print(f"rotor-gibbs: {record.error}", file=sys.stderr)
        return 3
    return 1 if record.status == "failed" else 0


if __name__ == "__main__":
    sys.exit(main())
