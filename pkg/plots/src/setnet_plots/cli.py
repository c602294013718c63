"""`plot <kind> --in metrics.csv --out chart.png` entry point."""

from __future__ import annotations

import argparse
import sys

from .charts import SCHEMAS, ChartSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render sweep chart CSVs to image files"
    )
    parser.add_argument("kind", choices=[k.replace("_", "-") for k in SCHEMAS])
    parser.add_argument("--in", dest="csv_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="out_path", required=True, help="output image (png/svg)")
    parser.add_argument("--activations", default=None,
                        help="comma-separated activation filter")
    parser.add_argument("--sparsities", default=None,
                        help="comma-separated sparsity filter (0 = dense)")
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ChartSpec(
        kind=args.kind.replace("-", "_"),
        csv_path=args.csv_path,
        out_path=args.out_path,
        activations=tuple(args.activations.split(",")) if args.activations else None,
        sparsities=tuple(float(s) for s in args.sparsities.split(","))
        if args.sparsities
        else None,
        title=args.title,
    )
    try:
        out = render(spec)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
