"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 metadata/data error, 3 backbone
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .backbones import build_backbone, known_names, spec_for
from .errors import BackboneError, MetadataError
from .extract import read_landmarks, read_metadata, run_extraction

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKBONE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphextract",
        description=__doc__.splitlines()[0] if __doc__ else None,
    )
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="extract features for a metadata CSV")
    p.add_argument("--images", required=True, help="image directory root")
    p.add_argument("--metadata", required=True, help="input metadata CSV")
    p.add_argument("--landmarks", required=True,
                   help="five-point landmark CSV (image_path,x1,y1,...,y5)")
    p.add_argument("--extractor", required=True,
                   help=f"backbone name, e.g. {', '.join(known_names())}, "
                        "or any name served by a TorchScript --checkpoint")
    p.add_argument("--variant", default=None)
    p.add_argument("--tap-point", default=None)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--checkpoint", default=None,
                   help="local weights (state dict, TorchScript, or model dir)")
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the toy backbone")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-manifest", required=True)

    sub.add_parser("backbones", help="list known backbone names")
    return parser


def _cmd_backbones() -> int:
    for name in known_names():
        spec = spec_for(name)
        print(f"{name}: variant {spec.variant}, dim {spec.output_dim}, "
              f"tap: {spec.tap_point}")
    return EXIT_OK


def _cmd_run(args) -> int:
    spec = spec_for(args.extractor, variant=args.variant,
                    tap_point=args.tap_point, output_dim=args.output_dim)
    backbone = build_backbone(spec, checkpoint=args.checkpoint,
                              device=args.device, seed=args.seed)
    records = read_metadata(args.metadata, extractor_name=spec.name)
    landmarks = read_landmarks(args.landmarks)
    report = run_extraction(
        args.images, records, spec, backbone, landmarks,
        out_features=args.out_features, out_manifest=args.out_manifest,
        batch_size=args.batch_size,
    )
    print(f"extracted {report.extracted} of {len(records)} samples "
          f"({report.skipped_unreadable} unreadable, "
          f"{report.skipped_alignment} alignment failures) -> "
          f"{args.out_features}, {args.out_manifest}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "backbones":
            return _cmd_backbones()
        return _cmd_run(args)
    except BackboneError as exc:
        print(f"backbone error: {exc}", file=sys.stderr)
        return EXIT_BACKBONE
    except MetadataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
