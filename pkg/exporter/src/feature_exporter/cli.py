"""Command-line entry points: image export and toy volume generation."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

from feature_exporter.backbone import DEFAULT_LAYERS, LAYER_CHANNELS
from feature_exporter.export import ExportError, export_features
from feature_exporter.toyfeatures import export_toy_features

EXIT_OK = 0
EXIT_ERROR = 2


def _parse_layers(text: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated layer list")
    return names


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc
    if h <= 0 or w <= 0:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feature-exporter",
        description="Export CNN activation volumes for stimulus images.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="run the backbone over an image directory")
    p.add_argument("--images", required=True, help="directory of stimulus images")
    p.add_argument("--out", required=True, help="output directory (features/ + manifest)")
    p.add_argument(
        "--layers",
        type=_parse_layers,
        default=DEFAULT_LAYERS,
        help=f"comma-separated activation maps (default {','.join(DEFAULT_LAYERS)}; "
        f"available {','.join(sorted(LAYER_CHANNELS))})",
    )
    p.add_argument("--resize", type=_parse_size, default=None,
                   help="common activation grid as HxW (default: finest selected map)")
    p.add_argument("--durations-config", default=None,
                   help="JSON sidecar with viewing durations")

    p = sub.add_parser("toy", help="write seeded synthetic volumes")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--resolution", type=_parse_size, default=(12, 16))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=4)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        if args.command == "export":
            manifest = export_features(
                args.images,
                args.out,
                layers=args.layers,
                resize=args.resize,
                durations_config=args.durations_config,
            )
            print(f"manifest={manifest}")
        else:
            records = export_toy_features(
                args.count, args.resolution, args.seed, args.out, channels=args.channels
            )
            print(f"files={len(records)} out={args.out}")
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
