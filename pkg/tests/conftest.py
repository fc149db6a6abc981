import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for naive_oracle imports

from tagminer.core import ImageRecord, TaggedDataset, build_class_index


def make_records(
    class_label: str,
    tag_sets: list[set[str] | frozenset[str]],
    correct: list[bool],
    split: str = "train",
    prefix: str | None = None,
) -> list[ImageRecord]:
    prefix = prefix or class_label
    return [
        ImageRecord(
            id=f"{prefix}-{i:04d}",
            class_label=class_label,
            tags=frozenset(tags),
            correct=flag,
            split=split,
        )
        for i, (tags, flag) in enumerate(zip(tag_sets, correct))
    ]


def random_records(
    rng: random.Random,
    class_label: str,
    n_images: int,
    n_tags: int,
    tag_prob: float = 0.3,
    correct_prob: float = 0.7,
    split: str = "train",
) -> list[ImageRecord]:
    vocab = [f"g{j:02d}" for j in range(n_tags)]
    out = []
    for i in range(n_images):
        tags = frozenset(t for t in vocab if rng.random() < tag_prob)
        out.append(
            ImageRecord(
                id=f"{class_label}-{i:04d}",
                class_label=class_label,
                tags=tags,
                correct=rng.random() < correct_prob,
                split=split,
            )
        )
    return out


def dataset_from_records(records, freq_threshold=1, split="train") -> TaggedDataset:
    by_class = {}
    for rec in records:
        by_class.setdefault(rec.class_label, []).append(rec)
    return TaggedDataset(
        {
            label: build_class_index(recs, freq_threshold)
            for label, recs in by_class.items()
        },
        split=split,
    )


@pytest.fixture
def tiny_class_records():
    """Four images, known masks: tag a on bits 2,3; tag b on bits 1,3."""
    return make_records(
        "wolf",
        [set(), {"b"}, {"a"}, {"a", "b"}],
        [False, True, True, False],
    )
