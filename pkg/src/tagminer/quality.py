"""Description-quality metrics in a shared vision-language embedding space.

A mode's description is scored against its member images (similarity
mean and spread) and against same-class images outside the group
(inside-vs-outside AUROC, the probability that a random member scores
higher than a random non-member, ties counted half).
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TaggedDataset, group_mask
from .ingest import EmbeddingTable
from .miner import MineReport

__all__ = ["similarity", "auroc", "score_modes", "ModeQuality", "QualityReport",
           "quality_to_jsonable", "write_quality_csv"]


def similarity(
    image_key: str,
    mode_key: str,
    image_embeddings: EmbeddingTable,
    description_embeddings: EmbeddingTable,
) -> float:
    """Dot product of the two unit vectors; lies in [-1, 1]."""
    if image_embeddings.dimension != description_embeddings.dimension:
        raise ValueError(
            f"dimension mismatch: images {image_embeddings.dimension}, "
            f"descriptions {description_embeddings.dimension}"
        )
    return float(
        np.dot(image_embeddings.vector(image_key), description_embeddings.vector(mode_key))
    )


def auroc(inside_scores: Sequence[float], outside_scores: Sequence[float]) -> float:
    """Mann-Whitney statistic: P(inside > outside) with ties counted 0.5.

    Computed by ranking against the sorted outside list, which is exactly
    the pairwise count without the quadratic loop.
    """
    if not len(inside_scores) or not len(outside_scores):
        raise ValueError("auroc needs non-empty score lists")
    outside = sorted(float(x) for x in outside_scores)
    total = 0.0
    for x in inside_scores:
        x = float(x)
        lo = bisect_left(outside, x)
        hi = bisect_right(outside, x)
        total += lo + 0.5 * (hi - lo)
    return total / (len(inside_scores) * len(outside))


@dataclass(frozen=True)
class ModeQuality:
    class_label: str
    tags: tuple[str, ...]
    description: str
    n_inside: int
    n_outside: int
    mean_sim: float
    std_sim: float
    auroc: float | None  # None when no same-class outside images exist


@dataclass(frozen=True)
class QualityReport:
    per_mode: tuple[ModeQuality, ...]
    pooled_mean_sim: float
    pooled_std_sim: float
    mean_auroc: float | None
    n_outside_rule: str
    seed: int
    std_convention: str = "population"


def _population_std(values: np.ndarray, mean: float) -> float:
    return math.sqrt(float(np.mean((values - mean) ** 2)))


def score_modes(
    report: MineReport,
    image_embeddings: EmbeddingTable,
    description_embeddings: EmbeddingTable,
    dataset: TaggedDataset,
    n_outside_per_mode: int | None = None,
    seed: int = 0,
) -> QualityReport:
    """Score every mode's description against members and sampled non-members.

    Outside images are drawn uniformly without replacement from the sorted
    list of same-class ids not in the group, ``n_outside_per_mode`` of them
    (default: as many as the group has members), so results do not depend
    on input ordering or platform.
    """
    per_mode: list[ModeQuality] = []
    pooled: list[np.ndarray] = []
    seeds = np.random.SeedSequence(seed).spawn(len(report.modes))
    for mode_idx, mode in enumerate(report.modes):
        index = dataset.classes.get(mode.class_label)
        if index is None:
            raise KeyError(f"class {mode.class_label!r} not in dataset")
        mask = group_mask(index, mode.tags)
        inside_ids = sorted(index.ids[b] for b in _bits(mask))
        if not inside_ids:
            raise ValueError(f"mode {mode.description!r} has no member images")
        desc_vec = description_embeddings.vector(mode.description)
        inside_mat = np.stack([image_embeddings.vector(i) for i in inside_ids])
        inside_scores = inside_mat @ desc_vec

        outside_pool = sorted(set(index.ids) - set(inside_ids))
        want = len(inside_ids) if n_outside_per_mode is None else n_outside_per_mode
        take = min(want, len(outside_pool))
        mode_auroc = None
        n_outside = 0
        if take > 0:
            rng = np.random.default_rng(seeds[mode_idx])
            chosen = rng.choice(len(outside_pool), size=take, replace=False)
            outside_ids = [outside_pool[i] for i in sorted(chosen)]
            outside_mat = np.stack([image_embeddings.vector(i) for i in outside_ids])
            outside_scores = outside_mat @ desc_vec
            mode_auroc = auroc(inside_scores, outside_scores)
            n_outside = take
        mean = float(np.mean(inside_scores))
        per_mode.append(
            ModeQuality(
                class_label=mode.class_label,
                tags=mode.tags,
                description=mode.description,
                n_inside=len(inside_ids),
                n_outside=n_outside,
                mean_sim=mean,
                std_sim=_population_std(inside_scores, mean),
                auroc=mode_auroc,
            )
        )
        pooled.append(inside_scores)

    if pooled:
        all_scores = np.concatenate(pooled)
        pooled_mean = float(np.mean(all_scores))
        pooled_std = _population_std(all_scores, pooled_mean)
    else:
        pooled_mean = pooled_std = float("nan")
    aurocs = [m.auroc for m in per_mode if m.auroc is not None]
    return QualityReport(
        per_mode=tuple(per_mode),
        pooled_mean_sim=pooled_mean,
        pooled_std_sim=pooled_std,
        mean_auroc=(sum(aurocs) / len(aurocs)) if aurocs else None,
        n_outside_rule=(
            "match_inside" if n_outside_per_mode is None else str(n_outside_per_mode)
        ),
        seed=seed,
    )


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def quality_to_jsonable(report: QualityReport) -> dict:
    return {
        "pooled_mean_sim": report.pooled_mean_sim,
        "pooled_std_sim": report.pooled_std_sim,
        "mean_auroc": report.mean_auroc,
        "n_outside_rule": report.n_outside_rule,
        "seed": report.seed,
        "std_convention": report.std_convention,
        "per_mode": [
            {
                "class": m.class_label,
                "tags": list(m.tags),
                "description": m.description,
                "n_inside": m.n_inside,
                "n_outside": m.n_outside,
                "mean_sim": m.mean_sim,
                "std_sim": m.std_sim,
                "auroc": m.auroc,
            }
            for m in report.per_mode
        ],
    }


def write_quality_csv(report: QualityReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["class", "tags", "n_inside", "n_outside", "mean_sim", "std_sim", "auroc"]
        )
        for m in report.per_mode:
            writer.writerow(
                [
                    m.class_label,
                    " + ".join(m.tags),
                    m.n_inside,
                    m.n_outside,
                    repr(m.mean_sim),
                    repr(m.std_sim),
                    "" if m.auroc is None else repr(m.auroc),
                ]
            )
