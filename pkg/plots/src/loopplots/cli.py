"""Command line entry: one subcommand per figure kind."""

import argparse
import sys

from .figures import FIGURE_KINDS, FigureRequest, PlotsError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopgibbs-plots",
        description="Render figures from loopgibbs result CSVs (PNG and SVG).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in sorted(FIGURE_KINDS):
        p = sub.add_parser(kind, help=f"render the {kind} figure")
        p.add_argument("--in", dest="csv_path", required=True, help="input CSV path")
        p.add_argument(
            "--out",
            dest="out_path",
            required=True,
            help="output image path; a bare stem writes both .png and .svg",
        )
        p.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    request = FigureRequest(args.command, args.csv_path, args.out_path, title=args.title)
    try:
        written = render(request)
    except PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
