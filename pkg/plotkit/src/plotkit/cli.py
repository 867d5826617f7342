"""Command line: `plotkit <kind> <in.csv> -o <out>`.

Exit codes: 0 on success, 1 on schema or input errors, 2 on usage errors
(argparse's convention).
"""

from __future__ import annotations

import argparse
import sys

from .figures import SCHEMAS, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="render a training/bound-check CSV into a static figure")
    parser.add_argument("kind", choices=sorted(SCHEMAS),
                        help="figure kind, fixes the expected CSV schema")
    parser.add_argument("csv", help="input CSV path")
    parser.add_argument("-o", "--out", required=True,
                        help="output image path (.png, .svg, ...)")
    parser.add_argument("--title", help="figure title")
    parser.add_argument("--xlabel", help="override the x-axis label")
    parser.add_argument("--ylabel", help="override the y-axis label")
    parser.add_argument("--target", type=float,
                        help="horizontal reference line at this risk value "
                             "(trace figures only)")
    ns = parser.parse_args(argv)
    if ns.target is not None and ns.kind != "trace":
        parser.error("--target only applies to trace figures")
    spec = FigureSpec(csv_path=ns.csv, kind=ns.kind, out_path=ns.out,
                      title=ns.title, xlabel=ns.xlabel, ylabel=ns.ylabel,
                      target=ns.target)
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {spec.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
