"""Exporter command line: checkpoint conversion and fixture generation."""

from __future__ import annotations

import argparse
import sys

from .bundlefmt import write
from .errors import ExportError
from .fixtures import DEFAULT_SEED, make_fixtures


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amdkit-export",
        description="Convert trained checkpoints into engine weight bundles "
                    "and generate oracle fixtures.")
    sub = parser.add_subparsers(dest="command", required=True)

    export = sub.add_parser("export", help="convert a Keras checkpoint")
    export.add_argument("--checkpoint", required=True, help=".keras or .h5 model file")
    export.add_argument("--out", required=True, help="output bundle path (.amdw)")

    fixtures = sub.add_parser("fixtures", help="generate the oracle fixture pack")
    fixtures.add_argument("--seed", type=int, default=DEFAULT_SEED)
    fixtures.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export":
            from .keras_convert import export_classifier

            tensors = export_classifier(args.checkpoint)
            write(args.out, tensors)
            print(f"wrote {len(tensors)} tensors to {args.out}")
        else:
            manifest = make_fixtures(args.seed, args.out)
            print(f"wrote {len(manifest['files'])} fixture files to {args.out} "
                  f"(seed {manifest['seed']})")
    except ExportError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
