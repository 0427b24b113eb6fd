"""Command line entry point.

    hydropipe run <scenario> [--seed N] [--out DIR]
    hydropipe report <run-dir>
    hydropipe calibrate <pairs-file>
    hydropipe tables

Output goes to ``--out`` when given, else ``$HYDROPIPE_OUT/<name>``, else
``runs/<name>``. Exit status: 0 all envelopes pass, 1 an envelope failed,
2 bad input.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .calib import fit_ph_calibration, load_calibration_pairs, ph_uncertainty
from .dsp import PH_CHANNEL
from .errors import HydroError
from .metrics import PUBLISHED_TARGETS, energy_note, energy_summary, fmt_value
from .runner import report, run
from .scenario import bundled_scenarios, load_scenario

EXIT_CONFIG = 2


def _out_dir(args, scenario):
    if args.out:
        return Path(args.out)
    root = os.environ.get("HYDROPIPE_OUT")
    return Path(root or "runs") / scenario.name


def cmd_run(args):
    scenario = load_scenario(args.scenario, seed=args.seed)
    result = run(scenario, _out_dir(args, scenario))
    sys.stdout.write(result.report)
    print(f"artifacts: {result.out_dir}")
    return result.status


def cmd_report(args):
    status, _, text = report(args.run_dir)
    sys.stdout.write(text)
    return status


def cmd_calibrate(args):
    raw, buffers = load_calibration_pairs(args.pairs_file)
    curve = fit_ph_calibration(raw, buffers)
    print(f"slope={curve.slope:.9g}")
    print(f"offset={curve.offset:.9g}")
    print(f"u_slope={curve.u_slope:.6g}")
    print(f"u_offset={curve.u_offset:.6g}")
    print(f"points_used={curve.points_used}")
    print(f"u_ph={ph_uncertainty(curve, PH_CHANNEL):.6g}")
    return 0


def cmd_tables(args):
    width = max(len(t.key) for t in PUBLISHED_TARGETS)
    for t in PUBLISHED_TARGETS:
        print(f"{t.key.ljust(width)}  {t.published_value:>10}  {t.op} {t.limit:g}  ({t.note})")
    print()
    for key, value in energy_summary().items():
        print(f"{key}={fmt_value(value)}")
    print(energy_note())
    if args.verbose:
        print()
        print("bundled scenarios: " + ", ".join(bundled_scenarios()))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="hydropipe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="run directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-evaluate a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("calibrate", help="fit a 5-point pH calibration")
    p.add_argument("pairs_file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("tables", help="print the published target envelopes")
    p.set_defaults(func=cmd_tables)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HydroError as exc:
        print(f"hydropipe: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"hydropipe: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
