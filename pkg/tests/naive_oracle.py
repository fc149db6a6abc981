"""Independent reference implementations used as test oracles.

Everything here works by per-record scans, explicit subset enumeration,
and Fraction arithmetic: no bitsets, no pruning, no shared code with the
library paths under test.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from tagminer.core import ImageRecord, MinerConfig


def naive_mine(
    records: Sequence[ImageRecord], config: MinerConfig
) -> set[tuple[str, tuple[str, ...]]]:
    """All (class, tags) passing the three predicates, by brute enumeration."""
    by_class: dict[str, list[ImageRecord]] = {}
    for rec in records:
        by_class.setdefault(rec.class_label, []).append(rec)
    found: set[tuple[str, tuple[str, ...]]] = set()
    for label, recs in by_class.items():
        counts: dict[str, int] = {}
        for rec in recs:
            for tag in rec.tags:
                counts[tag] = counts.get(tag, 0) + 1
        vocab = sorted(t for t, c in counts.items() if c >= config.freq_threshold)
        baseline = Fraction(sum(1 for r in recs if r.correct), len(recs))
        for size in range(1, config.l + 1):
            for subset in combinations(vocab, size):
                wanted = set(subset)
                members = [r for r in recs if wanted <= r.tags]
                if len(members) < config.s:
                    continue
                acc = Fraction(sum(1 for r in members if r.correct), len(members))
                if acc > baseline - config.a:
                    continue
                if size >= 2:
                    b = config.b_for(size)
                    minimal = True
                    for tag in subset:
                        rest = wanted - {tag}
                        sub = [r for r in recs if rest <= r.tags]
                        sub_acc = Fraction(sum(1 for r in sub if r.correct), len(sub))
                        if sub_acc < acc + b:
                            minimal = False
                            break
                    if not minimal:
                        continue
                found.add((label, subset))
    return found


def scan_support(records: Sequence[ImageRecord], tags: Iterable[str]) -> int:
    wanted = set(tags)
    return sum(1 for r in records if wanted <= r.tags)


def scan_accuracy(records: Sequence[ImageRecord], tags: Iterable[str]) -> Fraction:
    wanted = set(tags)
    members = [r for r in records if wanted <= r.tags]
    return Fraction(sum(1 for r in members if r.correct), len(members))


def brute_auroc(inside: Sequence[float], outside: Sequence[float]) -> float:
    """Quadratic pairwise count with ties worth one half."""
    total = 0.0
    for x in inside:
        for y in outside:
            if x > y:
                total += 1.0
            elif x == y:
                total += 0.5
    return total / (len(inside) * len(outside))


def levelwise_max_shared(
    anchor_tags: frozenset[str],
    other_tag_sets: Sequence[frozenset[str]],
    n_min: int,
) -> int:
    """Largest subset of anchor_tags contained in >= n_min of the others.

    Breadth-first level growth with per-record containment scans.
    """
    frequent = [
        frozenset([t])
        for t in sorted(anchor_tags)
        if sum(1 for s in other_tag_sets if t in s) >= n_min
    ]
    best = 1 if frequent else 0
    level = frequent
    while level:
        nxt = []
        seen: set[frozenset[str]] = set()
        for a in level:
            for b in frequent:
                cand = a | b
                if len(cand) != len(a) + 1 or cand in seen:
                    continue
                seen.add(cand)
                if sum(1 for s in other_tag_sets if cand <= s) >= n_min:
                    nxt.append(cand)
        if nxt:
            best = len(next(iter(nxt)))
        level = nxt
    return best
