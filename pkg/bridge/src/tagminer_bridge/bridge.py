"""Run a tagger / encoder over an image directory and emit tagminer inputs.

Outputs follow the consumer's file contract exactly: tags as JSON-lines
records with normalized tags, embeddings as JSON-lines key/vec rows with
unit-normalized vectors (an unnormalized sidecar accompanies every
embeddings file for distance work). Unreadable images are skipped with a
warning and counted in the stderr summary.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .backends import load_encoder, load_tagger

_WS = re.compile(r"\s+")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


def normalize_tag(raw: str) -> str:
    """Same normalization the consumer applies: lowercase, trim, collapse."""
    return _WS.sub(" ", raw.strip().lower())


def describe_mode(class_label: str, tags) -> str:
    """The consumer's description string contract."""
    return f"{class_label}: " + " + ".join(tags)


@dataclass
class BridgeConfig:
    image_dir: Path
    mapping_path: Path | None = None  # JSON: relative path -> {"class", "split"}
    tagger_id: str = "stub"
    encoder_id: str = "stub"
    batch_size: int = 16
    device: str = "cpu"
    out_tags: Path | None = None
    out_embeddings: Path | None = None
    out_descriptions: Path | None = None
    extra: dict = field(default_factory=dict)


def _load_mapping(config: BridgeConfig) -> dict:
    if config.mapping_path is None:
        return {}
    with open(config.mapping_path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _iter_images(config: BridgeConfig):
    """Yield (id, path) in sorted order; id is the path relative to image_dir."""
    root = Path(config.image_dir)
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() in IMAGE_SUFFIXES and path.is_file():
            yield str(path.relative_to(root)), path


def _write_manifest(out_path: Path, subcommand: str, config: BridgeConfig,
                    inputs: list[Path], started: float, **extra) -> None:
    digests = {}
    for path in inputs:
        digest = hashlib.sha256()
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
        digests[str(path)] = digest.hexdigest()
    manifest = {
        "subcommand": subcommand,
        "tagger_id": config.tagger_id,
        "encoder_id": config.encoder_id,
        "device": config.device,
        "batch_size": config.batch_size,
        "inputs": digests,
        "wall_time": time.perf_counter() - started,
        **extra,
    }
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def extract_tags(config: BridgeConfig) -> Path:
    """Tag every image and write the tags JSONL."""
    started = time.perf_counter()
    tagger = load_tagger(config.tagger_id)
    mapping = _load_mapping(config)
    out_path = Path(config.out_tags)
    written = skipped = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for image_id, path in _iter_images(config):
            try:
                with Image.open(path) as image:
                    raw_tags = tagger.tag_image(image)
            except OSError as exc:
                print(f"warning: skipping unreadable {path}: {exc}", file=sys.stderr)
                skipped += 1
                continue
            entry = mapping.get(image_id, {})
            tags = sorted({t for t in (normalize_tag(r) for r in raw_tags) if t})
            handle.write(
                json.dumps(
                    {
                        "id": image_id,
                        "class": entry.get("class", "unlabeled"),
                        "split": entry.get("split", "train"),
                        "tags": tags,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            written += 1
    print(f"tagged {written} images, skipped {skipped}", file=sys.stderr)
    _write_manifest(
        out_path, "extract-tags", config,
        [config.mapping_path] if config.mapping_path else [],
        started, threshold=getattr(tagger, "threshold", None),
        images_written=written, images_skipped=skipped,
    )
    return out_path


def _write_vectors(rows: list[tuple[str, list[float]]], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for key, vec in rows:
            handle.write(json.dumps({"key": key, "vec": vec}, sort_keys=True) + "\n")


def embed_images(config: BridgeConfig) -> Path:
    """Embed every image; unit vectors to out_embeddings, raw sidecar alongside."""
    started = time.perf_counter()
    encoder = load_encoder(config.encoder_id, device=config.device)
    out_path = Path(config.out_embeddings)
    unit_rows: list[tuple[str, list[float]]] = []
    raw_rows: list[tuple[str, list[float]]] = []
    skipped = 0
    for image_id, path in _iter_images(config):
        try:
            with Image.open(path) as image:
                vec = encoder.embed_image(image)
        except OSError as exc:
            print(f"warning: skipping unreadable {path}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        norm = float((vec @ vec) ** 0.5)
        unit_rows.append((image_id, [float(x) / norm for x in vec]))
        raw_rows.append((image_id, [float(x) for x in vec]))
    _write_vectors(unit_rows, out_path)
    raw_path = out_path.with_name(out_path.name + ".raw.jsonl")
    _write_vectors(raw_rows, raw_path)
    print(f"embedded {len(unit_rows)} images, skipped {skipped}", file=sys.stderr)
    _write_manifest(
        out_path, "embed-images", config, [], started,
        images_written=len(unit_rows), images_skipped=skipped,
        raw_sidecar=raw_path.name,
    )
    return out_path


def embed_descriptions(modes_report: Path, config: BridgeConfig) -> Path:
    """Embed each mined mode's description string, keyed by that string."""
    started = time.perf_counter()
    encoder = load_encoder(config.encoder_id, device=config.device)
    with open(modes_report, "r", encoding="utf-8") as handle:
        report = json.load(handle)
    out_path = Path(config.out_descriptions)
    rows: list[tuple[str, list[float]]] = []
    seen: set[str] = set()
    for mode in report["modes"]:
        description = describe_mode(mode["class"], mode["tags"])
        if description in seen:
            continue
        seen.add(description)
        vec = encoder.embed_text(description)
        norm = float((vec @ vec) ** 0.5)
        rows.append((description, [float(x) / norm for x in vec]))
    _write_vectors(rows, out_path)
    print(f"embedded {len(rows)} descriptions", file=sys.stderr)
    _write_manifest(
        out_path, "embed-descriptions", config, [Path(modes_report)], started,
        descriptions_written=len(rows),
    )
    return out_path
