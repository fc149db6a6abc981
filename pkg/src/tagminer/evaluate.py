"""Holdout generalization of mined modes and subset-ablation tables.

A mode generalizes when the images of the holdout split selected purely
by its tags show a comparable accuracy drop below the holdout class
baseline (recomputed on the holdout split, never reused from train).
Ablation evaluates every proper subset of a mode's tags to show that
the joint set is strictly harder than its parts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from .core import FailureMode, TaggedDataset, group_mask
from .miner import MineReport

__all__ = [
    "GeneralizationRecord",
    "generalize",
    "subset_ablation",
    "AblationRow",
    "AblationTable",
    "ablation_summary",
    "write_scatter_csv",
    "write_ablation_csv",
]

DEFAULT_MIN_HOLDOUT_SUPPORT = 10


@dataclass(frozen=True)
class GeneralizationRecord:
    mode: FailureMode
    holdout_support: int
    holdout_accuracy: float | None
    holdout_drop: float | None
    train_drop: float
    flag: str | None  # None when evaluable

    @property
    def evaluable(self) -> bool:
        return self.flag is None


def _holdout_group(dataset: TaggedDataset, mode: FailureMode):
    """(support, accuracy, class baseline) on the holdout split, or a flag."""
    index = dataset.classes.get(mode.class_label)
    if index is None:
        return None, "class_missing"
    missing = [t for t in mode.tags if t not in index.tag_masks]
    if missing:
        return None, f"tag_missing:{missing[0]}"
    mask = group_mask(index, mode.tags)
    support = mask.bit_count()
    if support == 0:
        return (0, None, index.baseline_accuracy), "insufficient_support"
    accuracy = (mask & index.correct_mask).bit_count() / support
    return (support, accuracy, index.baseline_accuracy), None


def generalize(
    report: MineReport,
    holdout: TaggedDataset,
    min_holdout_support: int = DEFAULT_MIN_HOLDOUT_SUPPORT,
    drop_thresholds: Sequence = (),
) -> tuple[list[GeneralizationRecord], dict]:
    """Evaluate every mode on the holdout split.

    Modes whose class or tags are absent from the holdout, or whose holdout
    group is smaller than ``min_holdout_support``, are flagged rather than
    scored. The summary reports, per requested threshold, the fraction of
    evaluable modes whose holdout drop reaches it, plus the
    (train_drop, holdout_drop) scatter pairs with a y=x reference segment.
    """
    records: list[GeneralizationRecord] = []
    for mode in report.modes:
        result, flag = _holdout_group(holdout, mode)
        if result is None:
            records.append(GeneralizationRecord(mode, 0, None, None, mode.drop, flag))
            continue
        support, accuracy, baseline = result
        if flag is None and support < min_holdout_support:
            flag = "insufficient_support"
        if flag is not None:
            records.append(
                GeneralizationRecord(mode, support, None, None, mode.drop, flag)
            )
            continue
        records.append(
            GeneralizationRecord(
                mode, support, accuracy, baseline - accuracy, mode.drop, None
            )
        )

    evaluable = [r for r in records if r.evaluable]
    scatter = [
        {
            "class": r.mode.class_label,
            "tags": list(r.mode.tags),
            "train_drop": r.train_drop,
            "holdout_drop": r.holdout_drop,
            "holdout_support": r.holdout_support,
        }
        for r in evaluable
    ]
    drops = [r.holdout_drop for r in evaluable] + [r.train_drop for r in evaluable]
    lo, hi = (min(drops), max(drops)) if drops else (0.0, 0.0)
    summary = {
        "n_modes": len(records),
        "n_evaluated": len(evaluable),
        "n_flagged": len(records) - len(evaluable),
        "min_holdout_support": min_holdout_support,
        "fraction_holdout_drop_at_least": {
            str(threshold): (
                sum(1 for r in evaluable if r.holdout_drop >= float(threshold))
                / len(evaluable)
                if evaluable
                else None
            )
            for threshold in drop_thresholds
        },
        "scatter": scatter,
        "y_equals_x": [[lo, lo], [hi, hi]],
    }
    return records, summary


@dataclass(frozen=True)
class AblationRow:
    tags: tuple[str, ...]
    size: int
    support: int
    accuracy: float | None
    drop: float | None
    flag: str | None


@dataclass(frozen=True)
class AblationTable:
    mode: FailureMode
    baseline_accuracy: float | None
    rows: tuple[AblationRow, ...]
    mean_drop_by_size: dict[int, float | None]


def subset_ablation(mode: FailureMode, dataset: TaggedDataset) -> AblationTable:
    """Evaluate the mode's full tag set and every nonempty proper subset.

    Zero-support (or unresolvable) subsets are flagged and excluded from the
    per-size mean drops.
    """
    if len(mode.tags) < 2:
        raise ValueError("ablation needs a mode with at least 2 tags")
    index = dataset.classes.get(mode.class_label)
    baseline = index.baseline_accuracy if index is not None else None
    rows: list[AblationRow] = []
    for size in range(len(mode.tags), 0, -1):
        for subset in combinations(mode.tags, size):
            if index is None:
                rows.append(AblationRow(subset, size, 0, None, None, "class_missing"))
                continue
            missing = [t for t in subset if t not in index.tag_masks]
            if missing:
                rows.append(
                    AblationRow(subset, size, 0, None, None, f"tag_missing:{missing[0]}")
                )
                continue
            mask = group_mask(index, subset)
            support = mask.bit_count()
            if support == 0:
                rows.append(AblationRow(subset, size, 0, None, None, "zero_support"))
                continue
            accuracy = (mask & index.correct_mask).bit_count() / support
            rows.append(
                AblationRow(subset, size, support, accuracy, baseline - accuracy, None)
            )
    means: dict[int, float | None] = {}
    for size in range(1, len(mode.tags) + 1):
        drops = [r.drop for r in rows if r.size == size and r.flag is None]
        means[size] = sum(drops) / len(drops) if drops else None
    return AblationTable(mode, baseline, tuple(rows), means)


def ablation_summary(
    modes: Sequence[FailureMode], dataset: TaggedDataset, tag_count: int = 3
) -> dict:
    """Pooled per-size mean drops over all modes with exactly ``tag_count`` tags.

    Pools every (mode, subset) drop of a given subset size, mirroring the
    aggregate "full set vs pairs vs singletons" comparison.
    """
    selected = [m for m in modes if len(m.tags) == tag_count]
    pooled: dict[int, list[float]] = {size: [] for size in range(1, tag_count + 1)}
    n_rows_flagged = 0
    for mode in selected:
        table = subset_ablation(mode, dataset)
        for row in table.rows:
            if row.flag is None:
                pooled[row.size].append(row.drop)
            else:
                n_rows_flagged += 1
    return {
        "tag_count": tag_count,
        "n_modes": len(selected),
        "n_rows_flagged": n_rows_flagged,
        "mean_drop_by_size": {
            str(size): (sum(vals) / len(vals) if vals else None)
            for size, vals in pooled.items()
        },
    }


def write_scatter_csv(records: Sequence[GeneralizationRecord], path) -> None:
    """CSV of one row per mode: class, tags, train_drop, holdout_drop, holdout_support."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["class", "tags", "train_drop", "holdout_drop", "holdout_support", "flag"]
        )
        for rec in records:
            writer.writerow(
                [
                    rec.mode.class_label,
                    " + ".join(rec.mode.tags),
                    repr(rec.train_drop),
                    "" if rec.holdout_drop is None else repr(rec.holdout_drop),
                    rec.holdout_support,
                    rec.flag or "",
                ]
            )


def write_ablation_csv(tables: Sequence[AblationTable], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["class", "mode_tags", "subset", "size", "support", "accuracy", "drop", "flag"]
        )
        for table in tables:
            for row in table.rows:
                writer.writerow(
                    [
                        table.mode.class_label,
                        " + ".join(table.mode.tags),
                        " + ".join(row.tags),
                        row.size,
                        row.support,
                        "" if row.accuracy is None else repr(row.accuracy),
                        "" if row.drop is None else repr(row.drop),
                        row.flag or "",
                    ]
                )
