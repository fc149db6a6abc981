"""Loading, validation, and joining of the three input file kinds.

All text formats are JSON-lines (one object per line, UTF-8). Embeddings
may instead come as a compact binary block; see ``BINARY_MAGIC`` below.
Parse errors always carry the file path and 1-based line number. Unknown
extra fields are ignored for forward compatibility.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ImageRecord, TaggedDataset, build_class_index, normalize_tag

__all__ = [
    "InputError",
    "EmbeddingTable",
    "load_tags",
    "write_tags",
    "load_predictions",
    "write_predictions",
    "load_embeddings",
    "write_embeddings",
    "assemble",
    "split_records",
    "dataset_to_jsonable",
]

SPLITS = ("train", "holdout")

# Binary embeddings block: magic, then little-endian u32 dimension and u64
# count, then count x (u32 byte-length + UTF-8 key), then count*dimension
# float32 values in key order.
BINARY_MAGIC = b"EMBBIN01"


class InputError(Exception):
    """Schema or consistency error in an input file."""

    def __init__(self, message: str, path=None, line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)
        self.path = path
        self.line = line


def _iter_jsonl(path):
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InputError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise InputError("expected a JSON object", path, lineno)
            yield lineno, obj


def _require(obj: dict, key: str, kind, path, lineno):
    if key not in obj:
        raise InputError(f"missing field {key!r}", path, lineno)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise InputError(
            f"field {key!r} has wrong type {type(value).__name__}", path, lineno
        )
    return value


def load_tags(path) -> list[ImageRecord]:
    """Read a tags file into partial ImageRecords (correctness unset).

    Tags are normalized and deduplicated; record order follows the file.
    """
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        image_id = _require(obj, "id", str, path, lineno)
        class_label = _require(obj, "class", str, path, lineno)
        split = _require(obj, "split", str, path, lineno)
        raw_tags = _require(obj, "tags", list, path, lineno)
        if image_id in seen:
            raise InputError(f"duplicate id {image_id!r}", path, lineno)
        seen.add(image_id)
        if split not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}, got {split!r}", path, lineno)
        tags = set()
        for raw in raw_tags:
            if not isinstance(raw, str):
                raise InputError("tags must be strings", path, lineno)
            tag = normalize_tag(raw)
            if not tag:
                raise InputError("tag is empty after normalization", path, lineno)
            tags.add(tag)
        records.append(
            ImageRecord(
                id=image_id,
                class_label=class_label,
                tags=frozenset(tags),
                correct=None,
                split=split,
            )
        )
    return records


def write_tags(records: Iterable[ImageRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "class": rec.class_label,
                        "split": rec.split,
                        "tags": sorted(rec.tags),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_predictions(path) -> dict[str, bool | str]:
    """Read a predictions file into a map id -> correctness.

    A value of True/False is a resolved correctness bit; a string is the
    predicted class, to be compared with the ground-truth label at join time.
    Duplicate ids are allowed only when their records agree.
    """
    out: dict[str, bool | str] = {}
    for lineno, obj in _iter_jsonl(path):
        image_id = _require(obj, "id", str, path, lineno)
        if "correct" in obj:
            value = obj["correct"]
            if not isinstance(value, bool):
                raise InputError("field 'correct' must be a boolean", path, lineno)
            entry: bool | str = value
        elif "predicted" in obj:
            value = obj["predicted"]
            if not isinstance(value, str):
                raise InputError("field 'predicted' must be a string", path, lineno)
            entry = value
        else:
            raise InputError(
                "record needs either 'correct' or 'predicted'", path, lineno
            )
        if image_id in out and out[image_id] != entry:
            raise InputError(
                f"conflicting duplicate for id {image_id!r}", path, lineno
            )
        out[image_id] = entry
    return out


def write_predictions(predictions: Mapping[str, bool | str], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for image_id in predictions:
            value = predictions[image_id]
            key = "correct" if isinstance(value, bool) else "predicted"
            handle.write(
                json.dumps({"id": image_id, key: value}, sort_keys=True) + "\n"
            )


class EmbeddingTable:
    """Fixed-dimension vectors keyed by image id or failure-mode description.

    ``unit`` rows are L2-normalized on load; ``raw`` rows keep the input
    magnitudes for distance work.
    """

    def __init__(self, keys: Sequence[str], raw: np.ndarray):
        if raw.ndim != 2 or raw.shape[0] != len(keys):
            raise ValueError("raw must be a (len(keys), dimension) array")
        self.keys = list(keys)
        self.index = {key: i for i, key in enumerate(self.keys)}
        self.raw = np.asarray(raw, dtype=np.float64)
        norms = np.linalg.norm(self.raw, axis=1)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise InputError(f"zero-norm vector for key {self.keys[zero[0]]!r}")
        self.unit = self.raw / norms[:, None]

    @property
    def dimension(self) -> int:
        return self.raw.shape[1]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def vector(self, key: str) -> np.ndarray:
        """Unit-normalized vector for ``key``."""
        try:
            return self.unit[self.index[key]]
        except KeyError:
            raise KeyError(f"no embedding for key {key!r}") from None

    def raw_vector(self, key: str) -> np.ndarray:
        try:
            return self.raw[self.index[key]]
        except KeyError:
            raise KeyError(f"no embedding for key {key!r}") from None


def load_embeddings(path, fmt: str = "jsonl") -> EmbeddingTable:
    """Read an embeddings file (``fmt`` is 'jsonl' or 'binary')."""
    if fmt == "jsonl":
        return _load_embeddings_jsonl(path)
    if fmt == "binary":
        return _load_embeddings_binary(path)
    raise ValueError(f"unknown embeddings format {fmt!r}")


def _load_embeddings_jsonl(path) -> EmbeddingTable:
    keys: list[str] = []
    rows: list[list[float]] = []
    dimension = None
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        key = _require(obj, "key", str, path, lineno)
        vec = _require(obj, "vec", list, path, lineno)
        if key in seen:
            raise InputError(f"duplicate key {key!r}", path, lineno)
        seen.add(key)
        if not all(isinstance(x, (int, float)) for x in vec):
            raise InputError("vector components must be numbers", path, lineno)
        if dimension is None:
            dimension = len(vec)
            if dimension == 0:
                raise InputError("zero-dimensional vector", path, lineno)
        elif len(vec) != dimension:
            raise InputError(
                f"dimension mismatch: expected {dimension}, got {len(vec)}",
                path,
                lineno,
            )
        if not all(x == x and abs(x) != float("inf") for x in vec):
            raise InputError("vector components must be finite", path, lineno)
        if not any(vec):
            raise InputError(f"zero-norm vector for key {key!r}", path, lineno)
        keys.append(key)
        rows.append(vec)
    if not keys:
        raise InputError("embeddings file is empty", path)
    return EmbeddingTable(keys, np.asarray(rows, dtype=np.float64))


def _load_embeddings_binary(path) -> EmbeddingTable:
    with open(path, "rb") as handle:
        magic = handle.read(len(BINARY_MAGIC))
        if magic != BINARY_MAGIC:
            raise InputError("bad magic: not a binary embeddings file", path)
        header = handle.read(12)
        if len(header) != 12:
            raise InputError("truncated header", path)
        dimension, count = struct.unpack("<IQ", header)
        if dimension == 0 or count == 0:
            raise InputError("empty embeddings block", path)
        keys = []
        for _ in range(count):
            (key_len,) = struct.unpack("<I", handle.read(4))
            keys.append(handle.read(key_len).decode("utf-8"))
        if len(set(keys)) != len(keys):
            raise InputError("duplicate keys in key table", path)
        data = handle.read(4 * dimension * count)
        if len(data) != 4 * dimension * count:
            raise InputError("truncated float block", path)
    raw = np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(count, dimension)
    norms = np.linalg.norm(raw, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise InputError(f"zero-norm vector for key {keys[zero[0]]!r}", path)
    return EmbeddingTable(keys, raw)


def write_embeddings(vectors: Mapping[str, Sequence[float]], path, fmt: str = "jsonl") -> None:
    """Write an embeddings file in either supported format."""
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as handle:
            for key in vectors:
                handle.write(
                    json.dumps(
                        {"key": key, "vec": [float(x) for x in vectors[key]]},
                        sort_keys=True,
                    )
                    + "\n"
                )
        return
    if fmt == "binary":
        keys = list(vectors)
        dimension = len(next(iter(vectors.values()))) if keys else 0
        with open(path, "wb") as handle:
            handle.write(BINARY_MAGIC)
            handle.write(struct.pack("<IQ", dimension, len(keys)))
            for key in keys:
                encoded = key.encode("utf-8")
                handle.write(struct.pack("<I", len(encoded)))
                handle.write(encoded)
            block = np.asarray([vectors[k] for k in keys], dtype="<f4")
            if block.size and block.shape[1] != dimension:
                raise ValueError("inconsistent dimensions")
            handle.write(block.tobytes())
        return
    raise ValueError(f"unknown embeddings format {fmt!r}")


def split_records(records: Iterable[ImageRecord]) -> dict[str, list[ImageRecord]]:
    """Partition records by split label, preserving order."""
    out: dict[str, list[ImageRecord]] = {}
    for rec in records:
        out.setdefault(rec.split, []).append(rec)
    return out


def assemble(
    tag_records: Sequence[ImageRecord],
    prediction_map: Mapping[str, bool | str],
    freq_threshold: int,
) -> TaggedDataset:
    """Join tag records with predictions and index every class.

    All records must share one split (partition with ``split_records`` first).
    Every record needs a prediction; missing ids are reported (up to 10).
    """
    if not tag_records:
        raise InputError("no records to assemble")
    splits = {rec.split for rec in tag_records}
    if len(splits) > 1:
        raise InputError(
            f"records span multiple splits {sorted(splits)}; assemble one split at a time"
        )
    missing = [rec.id for rec in tag_records if rec.id not in prediction_map]
    if missing:
        shown = ", ".join(repr(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (and {len(missing) - 10} more)"
        raise InputError(f"{len(missing)} records lack predictions: {shown}{more}")

    by_class: dict[str, list[ImageRecord]] = {}
    for rec in tag_records:
        entry = prediction_map[rec.id]
        correct = entry if isinstance(entry, bool) else entry == rec.class_label
        by_class.setdefault(rec.class_label, []).append(
            ImageRecord(rec.id, rec.class_label, rec.tags, correct, rec.split)
        )
    classes = {
        label: build_class_index(recs, freq_threshold)
        for label, recs in by_class.items()
    }
    return TaggedDataset(classes, split=splits.pop())


def dataset_to_jsonable(dataset: TaggedDataset) -> dict:
    """Canonical JSON-ready form of a dataset (for digests and determinism checks)."""
    return {
        "split": dataset.split,
        "classes": {
            label: {
                "image_count": index.image_count,
                "ids": list(index.ids),
                "vocabulary": list(index.vocabulary),
                "correct_mask": format(index.correct_mask, "x"),
                "tag_masks": {
                    tag: format(index.tag_masks[tag], "x") for tag in index.vocabulary
                },
            }
            for label, index in dataset.classes.items()
        },
    }
