"""Command line: convert --dataset mi1|mi2|mi3 --src DIR --out DIR."""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, ConversionSpec, convert


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convert",
        description="Convert public motor-imagery competition recordings "
                    "(.mat) into a portable trial bundle",
    )
    parser.add_argument("--dataset", required=True, choices=["mi1", "mi2", "mi3"])
    parser.add_argument("--src", required=True, help="directory with the .mat files")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--epoch-start", type=float, default=0.0,
                        help="epoch start in seconds after cue onset (default 0)")
    parser.add_argument("--epoch-len", type=float, default=3.0,
                        help="epoch length in seconds (default 3.0)")
    parser.add_argument("--subjects", nargs="+", type=int,
                        help="subset of 1-based subject numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ConversionSpec(dataset=args.dataset, src=args.src, out=args.out,
                              epoch_start_s=args.epoch_start,
                              epoch_len_s=args.epoch_len, subjects=args.subjects)
        out = convert(spec)
    except ConversionError as exc:
        print(f"conversion error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote bundle to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
