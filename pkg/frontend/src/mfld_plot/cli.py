"""Command-line entry points.

Subcommands:
  gap      primal/dual/gap curves from a records.csv
  density  per-snapshot 1D density panels from a run directory
"""

from __future__ import annotations

import argparse
import sys

from .artifacts import PlotError
from .render import plot_density_1d, plot_gap


def _cmd_gap(args) -> int:
    out = plot_gap(args.records, args.out, log_scale=args.log_scale, force=args.force)
    print(f"wrote {out}")
    return 0


def _cmd_density(args) -> int:
    out = plot_density_1d(args.snapshots_dir, args.out, log_scale=args.log_scale,
                          force=args.force)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfld-plot", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gap = sub.add_parser("gap", help="duality-gap curves")
    p_gap.add_argument("records", help="records.csv path")
    p_gap.add_argument("-o", "--out", required=True, help="output PNG path")
    p_gap.add_argument("--log-scale", action="store_true", help="log-scale the gap axis")
    p_gap.add_argument("--force", action="store_true", help="overwrite an existing output")
    p_gap.set_defaults(fn=_cmd_gap)

    p_den = sub.add_parser("density", help="1D density evolution panels")
    p_den.add_argument("snapshots_dir", help="run directory holding fig1_iter*.csv tables")
    p_den.add_argument("-o", "--out", required=True, help="output PNG path")
    p_den.add_argument("--log-scale", action="store_true", help="log-scale the density axis")
    p_den.add_argument("--force", action="store_true", help="overwrite an existing output")
    p_den.set_defaults(fn=_cmd_density)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (PlotError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
