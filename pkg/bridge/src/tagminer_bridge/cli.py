"""Command-line surface for the bridge."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import BackendUnavailable
from .bridge import BridgeConfig, embed_descriptions, embed_images, extract_tags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagminer-bridge",
        description="Emit tagminer input files from an image directory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--images", required=True, help="image directory")
        p.add_argument("--mapping", default=None,
                       help="JSON file: relative image path -> {class, split}")
        p.add_argument("--tagger", default="stub", help="tagging model id")
        p.add_argument("--encoder", default="stub", help="encoder model id")
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--device", default="cpu")

    p_tags = sub.add_parser("extract-tags", help="write the tags JSONL")
    common(p_tags)
    p_tags.add_argument("--out", required=True)

    p_img = sub.add_parser("embed-images", help="write image embeddings")
    common(p_img)
    p_img.add_argument("--out", required=True)

    p_desc = sub.add_parser("embed-descriptions", help="embed mined mode descriptions")
    common(p_desc)
    p_desc.add_argument("--modes", required=True, help="mine report JSON")
    p_desc.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = BridgeConfig(
        image_dir=Path(args.images),
        mapping_path=Path(args.mapping) if args.mapping else None,
        tagger_id=args.tagger,
        encoder_id=args.encoder,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        if args.command == "extract-tags":
            config.out_tags = Path(args.out)
            extract_tags(config)
        elif args.command == "embed-images":
            config.out_embeddings = Path(args.out)
            embed_images(config)
        else:
            config.out_descriptions = Path(args.out)
            embed_descriptions(Path(args.modes), config)
    except BackendUnavailable as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
