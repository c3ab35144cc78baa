"""CLI: run encoders over names/images and write a feature file."""

from __future__ import annotations

import argparse
import sys

from .encoders import DEFAULT_IMAGE_ENCODER, DEFAULT_TEXT_ENCODER, EncoderUnavailableError
from .export import ExportJob, export, read_entities_tsv, read_images_tsv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgalign-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode names and images into a feature file")
    p.add_argument("--entities", required=True, help="TSV of uri<TAB>name")
    p.add_argument("--images", help="TSV of uri<TAB>image path (optional)")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--dim", type=int, help="PCA-project all vectors to this dimension")
    p.add_argument("--text-encoder", default=DEFAULT_TEXT_ENCODER)
    p.add_argument("--image-encoder", default=DEFAULT_IMAGE_ENCODER)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        job = ExportJob(
            entities=read_entities_tsv(args.entities),
            images=read_images_tsv(args.images) if args.images else [],
            out_path=args.out,
            target_dim=args.dim,
            text_encoder_id=args.text_encoder,
            image_encoder_id=args.image_encoder,
        )
        report = export(job)
    except EncoderUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {report.n_name_vectors} name and {report.n_image_vectors} image "
        f"vectors (dim {report.dim}) to {args.out}"
    )
    if report.skipped_images or report.skipped_names:
        print(
            f"skipped {len(report.skipped_images)} images and "
            f"{len(report.skipped_names)} names; see {args.out}.report.json",
            file=sys.stderr,
        )
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
