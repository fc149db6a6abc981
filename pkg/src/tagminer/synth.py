"""Synthetic attributed datasets with planted failure modes.

Each class draws tags as independent Bernoulli variables; an image is
classified correctly with probability ``p_fail`` when all planted tags
are present and ``p_base`` otherwise. The planted (class, tags) pairs
are written to a ground-truth manifest so miners can be scored with
exact precision/recall. Matching synthetic embeddings place each image
at its tag-indicator vector plus Gaussian noise, which makes similarity
and distance statistics analytically predictable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ImageRecord, MinerConfig, describe_mode
from .ingest import write_embeddings, write_predictions, write_tags

__all__ = [
    "PlantSpec",
    "default_specs",
    "generate_records",
    "generate",
    "planted_pass_probability",
    "validate_spec",
    "vocabulary_of",
    "image_embeddings",
    "description_embeddings",
    "synth_embeddings",
]


@dataclass(frozen=True)
class PlantSpec:
    """Recipe for one synthetic class with a single planted failure mode.

    ``twin_tags`` (twin name -> source tag) adds perfectly correlated
    duplicates of existing tags: each twin is present exactly when its
    source is. Twins stress the minimality logic, since any set holding
    both a tag and its twin has a removal margin of exactly zero.
    """

    class_label: str
    planted_tags: tuple[str, ...]
    p_fail: float
    p_base: float
    tag_marginals: dict[str, float]  # drawn vocabulary -> P(tag present)
    n_images: int
    seed: int
    n_holdout: int = 0
    twin_tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_fail < self.p_base <= 1.0:
            raise ValueError("need 0 <= p_fail < p_base <= 1")
        missing = [t for t in self.planted_tags if t not in self.tag_marginals]
        if missing:
            raise ValueError(f"planted tags not in vocabulary: {missing}")
        if not self.planted_tags:
            raise ValueError("need at least one planted tag")
        for tag, prob in self.tag_marginals.items():
            if not 0.0 < prob < 1.0:
                raise ValueError(f"marginal for {tag!r} must lie in (0, 1)")
        for twin, source in self.twin_tags.items():
            if source not in self.tag_marginals:
                raise ValueError(f"twin {twin!r} copies unknown tag {source!r}")
            if twin in self.tag_marginals:
                raise ValueError(f"twin {twin!r} collides with a drawn tag")
        if self.n_images < 1:
            raise ValueError("n_images must be positive")
        if self.n_holdout < 0:
            raise ValueError("n_holdout must be non-negative")

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return tuple(sorted([*self.tag_marginals, *self.twin_tags]))

    @property
    def planted_probability(self) -> float:
        return math.prod(self.tag_marginals[t] for t in self.planted_tags)


def default_specs(
    n_classes: int = 5,
    plant_sizes: Sequence[int] = (1, 2, 3),
    n_images: int = 2000,
    n_tags: int = 20,
    seed: int = 0,
    *,
    n_holdout: int = 0,
    p_base: float = 0.95,
    p_fail: float = 0.0,
    planted_marginal: float = 0.33,
    noise_marginal: float = 0.30,
) -> list[PlantSpec]:
    """Standard benchmark layout: one planted mode per class, sizes cycling
    through ``plant_sizes``, planted tags chosen by seed."""
    rng = np.random.default_rng([seed, 0x5EED])
    specs = []
    for c in range(n_classes):
        size = plant_sizes[c % len(plant_sizes)]
        vocab = [f"t{j:02d}" for j in range(n_tags)]
        planted = sorted(rng.choice(n_tags, size=size, replace=False))
        marginals = {
            tag: (planted_marginal if j in planted else noise_marginal)
            for j, tag in enumerate(vocab)
        }
        specs.append(
            PlantSpec(
                class_label=f"class_{c}",
                planted_tags=tuple(vocab[j] for j in planted),
                p_fail=p_fail,
                p_base=p_base,
                tag_marginals=marginals,
                n_images=n_images,
                seed=seed * 1000 + c,
                n_holdout=n_holdout,
            )
        )
    return specs


def _draw_split(
    spec: PlantSpec, rng: np.random.Generator, count: int, split: str
) -> list[ImageRecord]:
    vocab = spec.vocabulary
    col = {t: i for i, t in enumerate(vocab)}
    drawn = sorted(spec.tag_marginals)
    probs = np.array([spec.tag_marginals[t] for t in drawn])
    drawn_present = rng.random((count, len(drawn))) < probs
    present = np.zeros((count, len(vocab)), dtype=bool)
    for j, tag in enumerate(drawn):
        present[:, col[tag]] = drawn_present[:, j]
    for twin, source in spec.twin_tags.items():
        present[:, col[twin]] = present[:, col[source]]
    planted_cols = [col[t] for t in spec.planted_tags]
    in_group = present[:, planted_cols].all(axis=1)
    u = rng.random(count)
    correct = np.where(in_group, u < spec.p_fail, u < spec.p_base)

    counts = present.sum(axis=1)
    _rows, cols = np.nonzero(present)
    per_row = np.split(cols, np.cumsum(counts)[:-1]) if count else []
    prefix = "" if split == "train" else "h"
    records = []
    for i in range(count):
        records.append(
            ImageRecord(
                id=f"{spec.class_label}-{prefix}{i:06d}",
                class_label=spec.class_label,
                tags=frozenset(vocab[j] for j in per_row[i]),
                correct=bool(correct[i]),
                split=split,
            )
        )
    return records


def generate_records(
    specs: Sequence[PlantSpec], seed: int = 0
) -> tuple[list[ImageRecord], dict]:
    """Draw all records for the given specs plus the ground-truth manifest."""
    labels = [spec.class_label for spec in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate class labels across specs")
    records: list[ImageRecord] = []
    for spec in specs:
        rng = np.random.default_rng([seed, spec.seed])
        records.extend(_draw_split(spec, rng, spec.n_images, "train"))
        if spec.n_holdout:
            records.extend(_draw_split(spec, rng, spec.n_holdout, "holdout"))
    manifest = {
        "planted": [
            {"class": spec.class_label, "tags": sorted(spec.planted_tags)}
            for spec in specs
        ]
    }
    return records, manifest


def generate(
    specs: Sequence[PlantSpec],
    out_dir,
    seed: int = 0,
    config: MinerConfig | None = None,
) -> dict[str, Path]:
    """Write tags/predictions/ground-truth files for the specs.

    When ``config`` is given, every spec is validated against the mining
    thresholds before anything is written.
    """
    if config is not None:
        for spec in specs:
            validate_spec(spec, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, manifest = generate_records(specs, seed=seed)
    paths = {
        "tags": out / "tags.jsonl",
        "predictions": out / "predictions.jsonl",
        "truth": out / "truth.json",
    }
    write_tags(records, paths["tags"])
    write_predictions({rec.id: rec.correct for rec in records}, paths["predictions"])
    with open(paths["truth"], "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return paths


def planted_pass_probability(
    spec: PlantSpec, config: MinerConfig, trials: int = 400, seed: int = 0
) -> float:
    """Monte-Carlo estimate that the planted mode passes all three predicates.

    Simulates the relevant binomial counts directly instead of full datasets,
    so a few hundred trials are cheap.
    """
    rng = np.random.default_rng([seed, spec.seed, 0xFEA5])
    n = spec.n_images
    pi = spec.planted_probability
    k = len(spec.planted_tags)
    b = config.b_for(k)
    passes = 0
    for _ in range(trials):
        group = int(rng.binomial(n, pi))
        if group < config.s:
            continue
        grp_correct = int(rng.binomial(group, spec.p_fail))
        out_correct = int(rng.binomial(n - group, spec.p_base))
        base_correct = grp_correct + out_correct
        if Fraction(grp_correct, group) > Fraction(base_correct, n) - config.a:
            continue
        ok = True
        if k >= 2:
            for tag in spec.planted_tags:
                # images outside the group that carry all planted tags but this one
                p_rest = pi / spec.tag_marginals[tag]
                extra_prob = (p_rest - pi) / (1.0 - pi)
                extra = int(rng.binomial(n - group, extra_prob))
                extra_correct = int(rng.binomial(extra, spec.p_base))
                sub_total = group + extra
                sub_correct = grp_correct + extra_correct
                if Fraction(sub_correct, sub_total) < Fraction(grp_correct, group) + b:
                    ok = False
                    break
        if ok:
            passes += 1
    return passes / trials


def validate_spec(
    spec: PlantSpec,
    config: MinerConfig,
    min_pass_probability: float = 0.99,
    trials: int = 400,
) -> None:
    """Reject specs whose planted mode is not safely recoverable."""
    expected_support = spec.n_images * spec.planted_probability
    if expected_support < config.s:
        raise ValueError(
            f"infeasible spec for {spec.class_label!r}: expected support "
            f"{expected_support:.1f} < s={config.s}"
        )
    rate = planted_pass_probability(spec, config, trials=trials)
    if rate < min_pass_probability:
        raise ValueError(
            f"infeasible spec for {spec.class_label!r}: planted mode passes "
            f"predicates in only {rate:.1%} of simulated trials"
        )


def vocabulary_of(records: Iterable[ImageRecord]) -> list[str]:
    """Sorted union of all tags in the records."""
    tags: set[str] = set()
    for rec in records:
        tags.update(rec.tags)
    return sorted(tags)


def image_embeddings(
    records: Sequence[ImageRecord],
    dimension: int,
    noise_sigma: float,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Unit vectors near each image's tag-indicator position."""
    vocab = vocabulary_of(records)
    if dimension < len(vocab):
        raise ValueError(
            f"dimension {dimension} smaller than vocabulary size {len(vocab)}"
        )
    col = {tag: i for i, tag in enumerate(vocab)}
    rng = np.random.default_rng([seed, 0xE3B])
    out: dict[str, np.ndarray] = {}
    for rec in records:
        vec = np.zeros(dimension)
        for tag in rec.tags:
            vec[col[tag]] = 1.0
        if noise_sigma:
            vec += noise_sigma * rng.standard_normal(dimension)
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # tagless image with sigma 0; give it a stable direction
            vec[-1] = 1.0
            norm = 1.0
        out[rec.id] = vec / norm
    return out


def description_embeddings(
    tag_sets: Mapping[str, Iterable[str]],
    vocabulary: Sequence[str],
    dimension: int,
) -> dict[str, np.ndarray]:
    """Exact normalized indicator vector per description key."""
    if dimension < len(vocabulary):
        raise ValueError(
            f"dimension {dimension} smaller than vocabulary size {len(vocabulary)}"
        )
    col = {tag: i for i, tag in enumerate(vocabulary)}
    out: dict[str, np.ndarray] = {}
    for key, tags in tag_sets.items():
        vec = np.zeros(dimension)
        for tag in tags:
            if tag not in col:
                raise KeyError(f"tag {tag!r} not in vocabulary")
            vec[col[tag]] = 1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError(f"description {key!r} has no tags")
        out[key] = vec / norm
    return out


def synth_embeddings(
    records: Sequence[ImageRecord],
    dimension: int,
    noise_sigma: float,
    seed: int,
    out_path,
    *,
    fmt: str = "jsonl",
) -> Path:
    """Write an image-embeddings file for the records (ingest formats)."""
    vectors = image_embeddings(records, dimension, noise_sigma, seed)
    write_embeddings(vectors, out_path, fmt=fmt)
    return Path(out_path)


def planted_description_embeddings(
    specs: Sequence[PlantSpec],
    records: Sequence[ImageRecord],
    dimension: int,
    out_path,
    *,
    fmt: str = "jsonl",
) -> Path:
    """Write description embeddings keyed by each planted mode's description."""
    vocab = vocabulary_of(records)
    tag_sets = {
        describe_mode(spec.class_label, sorted(spec.planted_tags)): sorted(
            spec.planted_tags
        )
        for spec in specs
    }
    vectors = description_embeddings(tag_sets, vocab, dimension)
    write_embeddings(vectors, out_path, fmt=fmt)
    return Path(out_path)
