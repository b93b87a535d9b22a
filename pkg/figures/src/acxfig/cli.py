"""Command line entry point: figures <kind> --in ... --out ...

Exit codes: 0 success, 2 on schema or argument errors.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureJob, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render acx study CSV outputs as figures and tables.",
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument(
        "--in", dest="inputs", required=True, nargs="+", help="input CSV path(s)"
    )
    parser.add_argument("--out", dest="output", required=True, help="output image path")
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--format", dest="fmt", default="png")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = FigureJob(
            kind=args.kind,
            inputs=tuple(args.inputs),
            output=args.output,
            dpi=args.dpi,
            fmt=args.fmt,
        )
        path = render(job)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
