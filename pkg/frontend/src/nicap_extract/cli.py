"""CLI: extract features from an image directory into a NICF file."""

import argparse
import sys

from .extractor import BACKBONES, ExtractionConfig, extract
from .nicf import write_nicf


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nicap-extract",
        description="Turn a directory of images into a NICF feature file")
    parser.add_argument("--images", required=True,
                        help="directory of input images")
    parser.add_argument("--backbone", choices=sorted(BACKBONES),
                        default="resnet50")
    parser.add_argument("--out", required=True, help="output .nicf path")
    parser.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.batch_size < 1:
        build_parser().error("--batch-size must be >= 1")
    try:
        records = extract(args.images, ExtractionConfig(backbone=args.backbone),
                          batch_size=args.batch_size)
        write_nicf(args.out, records)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 5
    print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
