"""Failure-mode search over per-class tag subsets.

A tag set S of class c is reported when (1) its subgroup holds at least
``s`` images, (2) subgroup accuracy sits at least ``a`` below the class
baseline, and (3) S is minimal: dropping any single tag raises accuracy
by at least the size-dependent margin b_n. Singletons skip (3); the drop
test against the baseline already plays that role for them.

The exhaustive strategy runs a DFS over lexicographically increasing
vocabulary indices, carrying the running intersection mask so each
candidate costs one AND + popcount. Support is anti-monotone, so a
branch dies as soon as its mask drops below ``s`` images; accuracy is
not monotone, so no pruning happens on the drop predicate.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .core import (
    ClassIndex,
    FailureMode,
    MinerConfig,
    TaggedDataset,
    drop_met,
    group_accuracy,
    group_mask,
    margin_met,
)

__all__ = [
    "MineStats",
    "MineReport",
    "mine",
    "mine_exhaustive",
    "mine_greedy",
    "check_minimality",
    "audit_report",
    "report_to_jsonable",
    "report_from_jsonable",
    "format_report_table",
]


@dataclass
class MineStats:
    candidates_evaluated: int = 0
    candidates_pruned_support: int = 0
    wall_time: float = 0.0

    def merge(self, other: "MineStats") -> None:
        self.candidates_evaluated += other.candidates_evaluated
        self.candidates_pruned_support += other.candidates_pruned_support


@dataclass
class MineReport:
    config: MinerConfig
    modes: list[FailureMode] = field(default_factory=list)
    stats: MineStats = field(default_factory=MineStats)

    def by_class(self) -> dict[str, list[FailureMode]]:
        out: dict[str, list[FailureMode]] = {}
        for mode in self.modes:
            out.setdefault(mode.class_label, []).append(mode)
        return out


def _mode_sort_key(mode: FailureMode):
    return (mode.class_label, len(mode.tags), -mode.drop, mode.tags)


def _check_margins(
    tag_idxs: Sequence[int],
    masks: Sequence[int],
    vocabulary: Sequence[str],
    correct: int,
    grp_correct: int,
    grp_total: int,
    b: Fraction,
) -> dict[str, float] | None:
    """Accuracies of each one-tag-removed superset, or None if any margin fails."""
    bp, bq = b.numerator, b.denominator
    rhs = grp_correct * bq + grp_total * bp  # compare cr*ns*bq >= nr*rhs
    margins: dict[str, float] = {}
    for drop_pos in range(len(tag_idxs)):
        sub = None
        for pos, idx in enumerate(tag_idxs):
            if pos == drop_pos:
                continue
            sub = masks[idx] if sub is None else sub & masks[idx]
        nr = sub.bit_count()
        cr = (sub & correct).bit_count()
        if cr * grp_total * bq < nr * rhs:
            return None
        margins[vocabulary[tag_idxs[drop_pos]]] = cr / nr
    return margins


def _mine_class_exhaustive(index: ClassIndex, config: MinerConfig):
    vocab = index.vocabulary
    masks = [index.tag_masks[t] for t in vocab]
    correct = index.correct_mask
    n = index.image_count
    base_correct = index.correct_count
    baseline = base_correct / n
    s = config.s
    max_len = config.l
    # acc(S) <= C/n - p/q  <=>  corr * drop_den <= pc * drop_num (exact)
    p, q = config.a.numerator, config.a.denominator
    drop_num = base_correct * q - n * p
    drop_den = n * q

    stats = MineStats()
    modes: list[FailureMode] = []
    n_tags = len(vocab)

    def descend(start: int, mask: int, tag_idxs: tuple[int, ...]):
        size = len(tag_idxs) + 1
        for i in range(start, n_tags):
            m = mask & masks[i]
            pc = m.bit_count()
            stats.candidates_evaluated += 1
            if pc < s:
                stats.candidates_pruned_support += 1
                continue
            corr = (m & correct).bit_count()
            if corr * drop_den <= pc * drop_num:
                cand = tag_idxs + (i,)
                if size == 1:
                    margins: dict[str, float] | None = {}
                else:
                    margins = _check_margins(
                        cand, masks, vocab, correct, corr, pc, config.b_for(size)
                    )
                if margins is not None:
                    modes.append(
                        FailureMode(
                            class_label=index.class_label,
                            tags=tuple(vocab[j] for j in cand),
                            support=pc,
                            group_accuracy=corr / pc,
                            baseline_accuracy=baseline,
                            drop=baseline - corr / pc,
                            minimality_margins=margins,
                        )
                    )
            if size < max_len:
                descend(i + 1, m, tag_idxs + (i,))

    descend(0, index.full_mask, ())
    return modes, stats


def _mine_class_greedy(index: ClassIndex, config: MinerConfig):
    """Beam-guided subset of the exhaustive search.

    Depth 1 evaluates every tag; each deeper level extends each beam member
    by every remaining tag and keeps the member's ``greedy_beam_width``
    lowest-accuracy extensions (support >= s) for further growth. Every
    candidate ever evaluated is then filtered by the same three predicates
    as the exhaustive strategy, so with a beam as wide as the vocabulary
    nothing is cut and the output matches the exhaustive one.
    """
    vocab = index.vocabulary
    masks = [index.tag_masks[t] for t in vocab]
    correct = index.correct_mask
    n = index.image_count
    base_correct = index.correct_count
    baseline = base_correct / n
    s = config.s
    bw = config.greedy_beam_width
    n_tags = len(vocab)

    stats = MineStats()
    # tags tuple -> (mask, support, correct); support-failing sets map to None
    visited: dict[tuple[int, ...], tuple[int, int, int] | None] = {}

    level: list[tuple[Fraction, tuple[int, ...], int]] = []
    for i in range(n_tags):
        m = masks[i]
        pc = m.bit_count()
        stats.candidates_evaluated += 1
        if pc < s:
            stats.candidates_pruned_support += 1
            visited[(i,)] = None
            continue
        corr = (m & correct).bit_count()
        visited[(i,)] = (m, pc, corr)
        level.append((Fraction(corr, pc), (i,), m))
    level.sort(key=lambda e: (e[0], e[1]))
    beam = level[:bw]

    for _depth in range(2, config.l + 1):
        kept: dict[tuple[int, ...], tuple[Fraction, tuple[int, ...], int]] = {}
        for _acc, tags_idx, mask in beam:
            extensions: list[tuple[Fraction, tuple[int, ...], int]] = []
            members = set(tags_idx)
            for t in range(n_tags):
                if t in members:
                    continue
                cand = tuple(sorted(tags_idx + (t,)))
                if cand in visited:
                    entry = visited[cand]
                    if entry is not None:
                        m, pc, corr = entry
                        extensions.append((Fraction(corr, pc), cand, m))
                    continue
                m = mask & masks[t]
                pc = m.bit_count()
                stats.candidates_evaluated += 1
                if pc < s:
                    stats.candidates_pruned_support += 1
                    visited[cand] = None
                    continue
                corr = (m & correct).bit_count()
                visited[cand] = (m, pc, corr)
                extensions.append((Fraction(corr, pc), cand, m))
            extensions.sort(key=lambda e: (e[0], e[1]))
            for entry in extensions[:bw]:
                kept.setdefault(entry[1], entry)
        beam = sorted(kept.values(), key=lambda e: (e[0], e[1]))
        if not beam:
            break

    # Same predicate filter as the exhaustive strategy, over everything seen.
    p, q = config.a.numerator, config.a.denominator
    drop_num = base_correct * q - n * p
    drop_den = n * q
    modes: list[FailureMode] = []
    for cand in sorted(visited):
        entry = visited[cand]
        if entry is None:
            continue
        _m, pc, corr = entry
        if corr * drop_den > pc * drop_num:
            continue
        if len(cand) == 1:
            margins: dict[str, float] | None = {}
        else:
            margins = _check_margins(
                cand, masks, vocab, correct, corr, pc, config.b_for(len(cand))
            )
        if margins is not None:
            modes.append(
                FailureMode(
                    class_label=index.class_label,
                    tags=tuple(vocab[j] for j in cand),
                    support=pc,
                    group_accuracy=corr / pc,
                    baseline_accuracy=baseline,
                    drop=baseline - corr / pc,
                    minimality_margins=margins,
                )
            )
    return modes, stats


def _mine_class(args):
    index, config = args
    if config.strategy == "greedy":
        return _mine_class_greedy(index, config)
    return _mine_class_exhaustive(index, config)


def mine(dataset: TaggedDataset, config: MinerConfig, threads: int = 1) -> MineReport:
    """Run the configured search over every class and assemble the report.

    ``threads`` counts worker processes for class-level parallelism;
    0 means all available cores. Output is identical for any thread count.
    """
    if not dataset.classes:
        raise ValueError("dataset has no classes")
    if threads == 0:
        threads = os.cpu_count() or 1
    labels = sorted(dataset.classes)
    started = time.perf_counter()
    if threads > 1 and len(labels) > 1:
        tasks = [(dataset.classes[label], config) for label in labels]
        with ProcessPoolExecutor(max_workers=min(threads, len(labels))) as pool:
            results = list(pool.map(_mine_class, tasks))
    else:
        results = [_mine_class((dataset.classes[label], config)) for label in labels]
    stats = MineStats()
    modes: list[FailureMode] = []
    for class_modes, class_stats in results:
        modes.extend(class_modes)
        stats.merge(class_stats)
    modes.sort(key=_mode_sort_key)
    stats.wall_time = time.perf_counter() - started
    return MineReport(config=config, modes=modes, stats=stats)


def mine_exhaustive(dataset: TaggedDataset, config: MinerConfig, threads: int = 1) -> MineReport:
    if config.strategy != "exhaustive":
        config = MinerConfig(**{**config.to_jsonable(), "strategy": "exhaustive"})
    return mine(dataset, config, threads=threads)


def mine_greedy(dataset: TaggedDataset, config: MinerConfig, threads: int = 1) -> MineReport:
    if config.strategy != "greedy":
        config = MinerConfig(**{**config.to_jsonable(), "strategy": "greedy"})
    return mine(dataset, config, threads=threads)


def check_minimality(
    index: ClassIndex, tags: Iterable[str], config: MinerConfig
) -> dict[str, tuple[float, bool]]:
    """Per tag: accuracy after removing it, and whether the margin b_|tags| holds."""
    tag_list = sorted(tags)
    if len(tag_list) < 2:
        raise ValueError("minimality is defined for tag sets of size >= 2")
    full = group_mask(index, tag_list)
    grp_total = full.bit_count()
    if grp_total == 0:
        raise ValueError("empty group: minimality undefined")
    grp_correct = (full & index.correct_mask).bit_count()
    b = config.b_for(len(tag_list))
    out: dict[str, tuple[float, bool]] = {}
    for tag in tag_list:
        rest = [t for t in tag_list if t != tag]
        sub = group_mask(index, rest)
        sub_total = sub.bit_count()
        sub_correct = (sub & index.correct_mask).bit_count()
        passes = margin_met(sub_correct, sub_total, grp_correct, grp_total, b)
        out[tag] = (sub_correct / sub_total, passes)
    return out


def audit_report(report: MineReport, dataset: TaggedDataset) -> list[str]:
    """Re-verify every reported mode against the dataset; returns violations.

    An empty list means the report is internally consistent: supports, drops,
    and minimality margins all re-check exactly, ordering is canonical, and
    no (class, tags) pair repeats.
    """
    config = report.config
    violations: list[str] = []
    seen: set[tuple[str, tuple[str, ...]]] = set()
    for mode in report.modes:
        name = f"{mode.class_label}/{'+'.join(mode.tags)}"
        if mode.key() in seen:
            violations.append(f"{name}: duplicate mode")
            continue
        seen.add(mode.key())
        if list(mode.tags) != sorted(mode.tags):
            violations.append(f"{name}: tags not sorted")
        index = dataset.classes.get(mode.class_label)
        if index is None:
            violations.append(f"{name}: class not in dataset")
            continue
        try:
            mask = group_mask(index, mode.tags)
        except KeyError as exc:
            violations.append(f"{name}: {exc}")
            continue
        support = mask.bit_count()
        if support != mode.support:
            violations.append(f"{name}: support {mode.support} != {support}")
        if support < config.s:
            violations.append(f"{name}: support below s={config.s}")
            continue
        corr = (mask & index.correct_mask).bit_count()
        if abs(group_accuracy(index, mask) - mode.group_accuracy) > 1e-12:
            violations.append(f"{name}: group accuracy mismatch")
        if not drop_met(corr, support, index.correct_count, index.image_count, config.a):
            violations.append(f"{name}: drop predicate fails")
        if len(mode.tags) >= 2:
            margins = check_minimality(index, mode.tags, config)
            for tag, (acc_without, passes) in margins.items():
                if not passes:
                    violations.append(f"{name}: margin fails for tag {tag!r}")
                recorded = mode.minimality_margins.get(tag)
                if recorded is None or abs(recorded - acc_without) > 1e-12:
                    violations.append(f"{name}: recorded margin mismatch for {tag!r}")
    ordered = sorted(report.modes, key=_mode_sort_key)
    if [m.key() for m in ordered] != [m.key() for m in report.modes]:
        violations.append("report: modes not in canonical order")
    return violations


def report_to_jsonable(report: MineReport) -> dict:
    """JSON-ready report. Wall time is deliberately left to the run manifest
    so that serialized reports are byte-identical across reruns."""
    return {
        "config": report.config.to_jsonable(),
        "stats": {
            "candidates_evaluated": report.stats.candidates_evaluated,
            "candidates_pruned_support": report.stats.candidates_pruned_support,
        },
        "modes": [
            {
                "class": mode.class_label,
                "tags": list(mode.tags),
                "support": mode.support,
                "group_accuracy": mode.group_accuracy,
                "baseline_accuracy": mode.baseline_accuracy,
                "drop": mode.drop,
                "minimality_margins": mode.minimality_margins,
                "description": mode.description,
            }
            for mode in report.modes
        ],
    }


def report_from_jsonable(payload: dict) -> MineReport:
    config = payload["config"]
    modes = [
        FailureMode(
            class_label=entry["class"],
            tags=tuple(entry["tags"]),
            support=entry["support"],
            group_accuracy=entry["group_accuracy"],
            baseline_accuracy=entry["baseline_accuracy"],
            drop=entry["drop"],
            minimality_margins=dict(entry["minimality_margins"]),
        )
        for entry in payload["modes"]
    ]
    stats = MineStats(
        candidates_evaluated=payload["stats"]["candidates_evaluated"],
        candidates_pruned_support=payload["stats"]["candidates_pruned_support"],
    )
    return MineReport(config=MinerConfig(**config), modes=modes, stats=stats)


def format_report_table(report: MineReport) -> str:
    """Human-readable table: class, tags joined with ' + ', support, accuracy, drop."""
    lines = []
    header = f"{'class':<24} {'tags':<44} {'support':>7} {'accuracy':>9} {'drop':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for mode in report.modes:
        tags = " + ".join(mode.tags)
        lines.append(
            f"{mode.class_label:<24} {tags:<44} {mode.support:>7} "
            f"{100 * mode.group_accuracy:>8.2f}% {100 * mode.drop:>7.2f}%"
        )
    lines.append(
        f"{len(report.modes)} failure modes; "
        f"{report.stats.candidates_evaluated} candidates evaluated, "
        f"{report.stats.candidates_pruned_support} pruned on support"
    )
    return "\n".join(lines) + "\n"
