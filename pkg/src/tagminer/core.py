"""Domain types shared by every other module.

Images are grouped per class; inside a class each image owns a bit
position, and every tag in the class vocabulary owns a bitset (a plain
Python int) over those positions. All subgroup work downstream reduces
to AND + popcount on these masks. Accuracy predicates are evaluated
with exact rational arithmetic so that threshold comparisons never
depend on float rounding.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "ImageRecord",
    "ClassIndex",
    "TaggedDataset",
    "FailureMode",
    "MinerConfig",
    "normalize_tag",
    "as_fraction",
    "build_class_index",
    "group_mask",
    "group_accuracy",
    "drop_met",
    "margin_met",
    "describe_mode",
]

_WS = re.compile(r"\s+")


def normalize_tag(raw: str) -> str:
    """Lowercase, trim, and collapse internal whitespace of a tag string."""
    return _WS.sub(" ", raw.strip().lower())


def as_fraction(value) -> Fraction:
    """Coerce a threshold given as float, int, str, or Fraction to an exact Fraction.

    Floats go through their shortest decimal repr ("0.1" -> 1/10), strings may
    carry a percent sign ("30%" -> 3/10).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(Decimal(repr(value)))
    if isinstance(value, str):
        text = value.strip()
        percent = text.endswith("%")
        if percent:
            text = text[:-1].strip()
        try:
            frac = Fraction(text)  # handles "0.30" and "3/10"
        except ValueError:
            try:
                frac = Fraction(Decimal(text))  # handles exponent forms
            except InvalidOperation as exc:
                raise ValueError(f"not a number: {value!r}") from exc
        return frac / 100 if percent else frac
    raise TypeError(f"cannot interpret {type(value).__name__} as a fraction")


@dataclass(frozen=True)
class ImageRecord:
    """One image: opaque id, ground-truth class, normalized tag set, correctness bit.

    ``correct`` is None for partially loaded records (tags file only).
    """

    id: str
    class_label: str
    tags: frozenset[str]
    correct: bool | None = None
    split: str = "train"


class ClassIndex:
    """Bitset-indexed view of all images of one class.

    Bit i of every mask refers to ``ids[i]``. ``tag_masks`` covers exactly the
    vocabulary (tags occurring at least ``freq_threshold`` times in the class).
    Immutable after construction; safe to share across workers.
    """

    __slots__ = (
        "class_label",
        "vocabulary",
        "image_count",
        "tag_masks",
        "correct_mask",
        "correct_count",
        "ids",
        "_bit_of",
    )

    def __init__(
        self,
        class_label: str,
        vocabulary: Sequence[str],
        tag_masks: Mapping[str, int],
        correct_mask: int,
        ids: Sequence[str],
    ):
        self.class_label = class_label
        self.vocabulary = tuple(vocabulary)
        self.tag_masks = dict(tag_masks)
        self.correct_mask = correct_mask
        self.ids = tuple(ids)
        self.image_count = len(self.ids)
        self.correct_count = correct_mask.bit_count()
        self._bit_of = {img_id: i for i, img_id in enumerate(self.ids)}

    @property
    def baseline_accuracy(self) -> float:
        return self.correct_count / self.image_count

    @property
    def baseline_fraction(self) -> Fraction:
        return Fraction(self.correct_count, self.image_count)

    @property
    def full_mask(self) -> int:
        return (1 << self.image_count) - 1

    def bit_of(self, image_id: str) -> int:
        return self._bit_of[image_id]

    def id_at(self, bit: int) -> str:
        return self.ids[bit]

    def __repr__(self):
        return (
            f"ClassIndex({self.class_label!r}, images={self.image_count}, "
            f"tags={len(self.vocabulary)}, baseline={self.baseline_accuracy:.4f})"
        )


class TaggedDataset:
    """Immutable per-split collection of ClassIndex objects keyed by class label."""

    __slots__ = ("classes", "split")

    def __init__(self, classes: Mapping[str, ClassIndex], split: str = "train"):
        self.classes = {label: classes[label] for label in sorted(classes)}
        self.split = split

    @property
    def n_images(self) -> int:
        return sum(index.image_count for index in self.classes.values())

    def id_at(self, class_label: str, bit: int) -> str:
        return self.classes[class_label].id_at(bit)

    def bit_of(self, class_label: str, image_id: str) -> int:
        return self.classes[class_label].bit_of(image_id)

    def __repr__(self):
        return f"TaggedDataset(split={self.split!r}, classes={len(self.classes)}, images={self.n_images})"


@dataclass(frozen=True)
class FailureMode:
    """A class plus a minimal tag set whose joint subgroup shows a large accuracy drop."""

    class_label: str
    tags: tuple[str, ...]  # sorted lexicographically
    support: int
    group_accuracy: float
    baseline_accuracy: float
    drop: float
    minimality_margins: dict[str, float] = field(default_factory=dict)

    @property
    def description(self) -> str:
        return describe_mode(self.class_label, self.tags)

    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.class_label, self.tags)


def describe_mode(class_label: str, tags: Sequence[str]) -> str:
    """Canonical description string: ``<class>: <tag1> + <tag2> + ...``."""
    return f"{class_label}: " + " + ".join(tags)


@dataclass(frozen=True)
class MinerConfig:
    """Search hyperparameters.

    ``b_schedule[k]`` is the minimality margin for tag sets of size k+2; sizes
    past the end of the list extend by halving: b_n = b_2 / 2^(n-2).
    """

    s: int = 30
    a: Fraction = Fraction(3, 10)
    b_schedule: tuple[Fraction, ...] = (
        Fraction(1, 10),
        Fraction(1, 20),
        Fraction(1, 40),
    )
    l: int = 3
    freq_threshold: int = 50
    strategy: str = "exhaustive"
    greedy_beam_width: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a", as_fraction(self.a))
        object.__setattr__(
            self, "b_schedule", tuple(as_fraction(b) for b in self.b_schedule)
        )
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        if not self.b_schedule:
            raise ValueError("b_schedule must not be empty")
        for b in self.b_schedule:
            if not 0 < b < 1:
                raise ValueError("b_schedule values must lie in (0, 1)")
        if self.l < 1:
            raise ValueError("l must be at least 1")
        if self.freq_threshold < 1:
            raise ValueError("freq_threshold must be at least 1")
        if self.strategy not in ("exhaustive", "greedy"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.greedy_beam_width < 1:
            raise ValueError("greedy_beam_width must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def b_for(self, n: int) -> Fraction | None:
        """Minimality margin for tag sets of size n; None for n < 2 (vacuous)."""
        if n < 2:
            return None
        if n - 2 < len(self.b_schedule):
            return self.b_schedule[n - 2]
        return self.b_schedule[0] / 2 ** (n - 2)

    def to_jsonable(self) -> dict:
        return {
            "s": self.s,
            "a": str(self.a),
            "b_schedule": [str(b) for b in self.b_schedule],
            "l": self.l,
            "freq_threshold": self.freq_threshold,
            "strategy": self.strategy,
            "greedy_beam_width": self.greedy_beam_width,
            "seed": self.seed,
        }


def build_class_index(records: Sequence[ImageRecord], freq_threshold: int) -> ClassIndex:
    """Index one class's records: vocabulary, per-tag bitsets, correctness bitset.

    The vocabulary keeps exactly the tags occurring in at least ``freq_threshold``
    records, sorted. Bit positions follow the input record order.
    """
    if not records:
        raise ValueError("empty class: cannot index zero records")
    label = records[0].class_label
    n = len(records)
    counts: dict[str, int] = {}
    for rec in records:
        if rec.class_label != label:
            raise ValueError(
                f"mixed class labels: {label!r} and {rec.class_label!r}"
            )
        if rec.correct is None:
            raise ValueError(f"record {rec.id!r} has no correctness bit")
        for tag in rec.tags:
            counts[tag] = counts.get(tag, 0) + 1
    vocabulary = sorted(t for t, c in counts.items() if c >= freq_threshold)
    vocab_set = set(vocabulary)

    n_bytes = (n + 7) // 8
    tag_bytes = {tag: bytearray(n_bytes) for tag in vocabulary}
    correct_bytes = bytearray(n_bytes)
    for i, rec in enumerate(records):
        byte, bit = i >> 3, 1 << (i & 7)
        if rec.correct:
            correct_bytes[byte] |= bit
        for tag in rec.tags:
            if tag in vocab_set:
                tag_bytes[tag][byte] |= bit

    tag_masks = {
        tag: int.from_bytes(bytes(buf), "little") for tag, buf in tag_bytes.items()
    }
    correct_mask = int.from_bytes(bytes(correct_bytes), "little")
    return ClassIndex(
        class_label=label,
        vocabulary=vocabulary,
        tag_masks=tag_masks,
        correct_mask=correct_mask,
        ids=[rec.id for rec in records],
    )


def group_mask(index: ClassIndex, tags: Iterable[str]) -> int:
    """Bitset of the class images containing every tag; empty set selects the whole class."""
    mask = index.full_mask
    for tag in tags:
        try:
            mask &= index.tag_masks[tag]
        except KeyError:
            raise KeyError(
                f"tag {tag!r} not in vocabulary of class {index.class_label!r}"
            ) from None
    return mask


def group_accuracy(index: ClassIndex, mask: int) -> float:
    """Classifier accuracy over the images selected by ``mask``."""
    total = mask.bit_count()
    if total == 0:
        raise ValueError("empty group: accuracy undefined")
    return (mask & index.correct_mask).bit_count() / total


def drop_met(
    correct: int, total: int, base_correct: int, base_total: int, min_drop: Fraction
) -> bool:
    """Exact test of: group accuracy <= baseline accuracy - min_drop."""
    return Fraction(correct, total) <= Fraction(base_correct, base_total) - min_drop


def margin_met(
    sub_correct: int, sub_total: int, grp_correct: int, grp_total: int, margin: Fraction
) -> bool:
    """Exact test of: accuracy without one tag >= group accuracy + margin."""
    return Fraction(sub_correct, sub_total) >= Fraction(grp_correct, grp_total) + margin
