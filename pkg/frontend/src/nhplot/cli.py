"""Command line: nhplot plot --kind <kind> --in <csv> [--in <csv> ...] --out <img>."""

import argparse
import sys

from .reader import PlotDataError
from .render import KINDS, PlotSpec, render


def build_parser():
    parser = argparse.ArgumentParser(prog="nhplot")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plot", help="render one figure from CSV input")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--title", default="")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        out = render(PlotSpec(kind=args.kind, inputs=tuple(args.inputs),
                              out=args.out, title=args.title))
    except PlotDataError as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
