"""Representation-space vs semantic-space diagnostics.

Two complementary probes over an embedded, tagged image collection:

* distance statistics between image pairs conditioned on how many tags
  they share, including the probability that such a pair is farther
  apart than a fully random pair;
* neighborhood structure: how many tags the N nearest neighbors of an
  anchor have in common (representation side) versus the largest subset
  of the anchor's own tags jointly carried by at least N other images
  (semantic side, exact branch-and-bound).

Distances are Euclidean on the vectors exactly as stored in the
embeddings file (the loader keeps raw magnitudes for this purpose).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import ImageRecord, as_fraction
from .ingest import EmbeddingTable

__all__ = [
    "DistanceRow",
    "DistanceStats",
    "NeighborhoodRow",
    "SemanticRow",
    "NeighborhoodStats",
    "distance_stats",
    "neighborhood_stats",
    "format_distance_table",
    "format_neighborhood_table",
]

REJECTION_CAP = 10_000_000  # candidate pair draws per conditioned row
_BATCH = 4096


@dataclass(frozen=True)
class DistanceRow:
    d: int
    n_pairs: int
    mean_distance: float | None
    std_distance: float | None
    prob_exceeds_random: float | None
    flag: str | None  # "insufficient_images" when < 2 images can satisfy d


@dataclass(frozen=True)
class DistanceStats:
    rows: tuple[DistanceRow, ...]
    n_pairs_requested: int
    seed: int


@dataclass(frozen=True)
class NeighborhoodRow:
    n_neighbors: int
    alpha: float
    mean_shared_tags_repr: float


@dataclass(frozen=True)
class SemanticRow:
    n_neighbors: int
    mean_max_shared_tags: float
    mean_individually_shared: float  # tags of x each shared with >= N others


@dataclass(frozen=True)
class NeighborhoodStats:
    rows: tuple[NeighborhoodRow, ...]
    semantic_rows: tuple[SemanticRow, ...]
    n_anchors: int
    n_skipped_empty: int
    seed: int


def _aligned(records: Sequence[ImageRecord], embeddings: EmbeddingTable):
    """Sorted image ids with both tags and an embedding; raw matrix + tag masks."""
    by_id = {}
    for rec in records:
        by_id[rec.id] = rec
    ids = sorted(by_id)
    missing = [i for i in ids if i not in embeddings]
    if missing:
        raise KeyError(f"no embedding for image {missing[0]!r}")
    matrix = np.stack([embeddings.raw_vector(i) for i in ids])
    vocab = sorted({t for rec in by_id.values() for t in rec.tags})
    col = {tag: j for j, tag in enumerate(vocab)}
    masks = []
    for i in ids:
        m = 0
        for tag in by_id[i].tags:
            m |= 1 << col[tag]
        masks.append(m)
    return ids, matrix, masks, vocab


def _pair_distances(matrix: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    diff = matrix[pairs[:, 0]] - matrix[pairs[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _random_pairs(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    out = np.empty((0, 2), dtype=np.int64)
    while len(out) < count:
        cand = rng.integers(0, n, size=(count - len(out) + 16, 2))
        cand = cand[cand[:, 0] != cand[:, 1]]
        out = np.concatenate([out, cand])
    return out[:count]


def distance_stats(
    embeddings: EmbeddingTable,
    tag_records: Sequence[ImageRecord],
    d_list: Sequence[int],
    n_pairs: int = 10_000,
    seed: int = 0,
) -> DistanceStats:
    """Distance mean/std over pairs sharing at least d tags, for each d.

    Pairs are rejection-sampled uniformly; each accepted pair is compared
    against an independent unconditioned pair to estimate the probability
    that the conditioned distance is larger. Rows whose condition cannot be
    met by the data are flagged; a condition that is merely too rare to hit
    within the sampling cap raises.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    ids, matrix, masks, _vocab = _aligned(tag_records, embeddings)
    n = len(ids)
    if n < 2:
        raise ValueError("need at least two images")
    tag_sizes = [m.bit_count() for m in masks]
    rows: list[DistanceRow] = []
    for row_idx, d in enumerate(d_list):
        if sum(1 for size in tag_sizes if size >= d) < 2:
            rows.append(DistanceRow(d, 0, None, None, None, "insufficient_images"))
            continue
        rng = np.random.default_rng([seed, row_idx])
        accepted = np.empty((n_pairs, 2), dtype=np.int64)
        got = 0
        attempts = 0
        while got < n_pairs:
            if attempts >= REJECTION_CAP:
                raise RuntimeError(
                    f"pairs with >= {d} shared tags are too rare "
                    f"(cap of {REJECTION_CAP} draws exhausted)"
                )
            cand = rng.integers(0, n, size=(_BATCH, 2))
            attempts += _BATCH
            for i, j in cand:
                if i == j:
                    continue
                if (masks[i] & masks[j]).bit_count() >= d:
                    accepted[got] = (i, j)
                    got += 1
                    if got == n_pairs:
                        break
        cond_dist = _pair_distances(matrix, accepted)
        rand_dist = _pair_distances(matrix, _random_pairs(rng, n, n_pairs))
        mean = float(np.mean(cond_dist))
        std = float(np.std(cond_dist))
        prob = float(np.mean(cond_dist > rand_dist))
        rows.append(DistanceRow(d, n_pairs, mean, std, prob, None))
    return DistanceStats(rows=tuple(rows), n_pairs_requested=n_pairs, seed=seed)


def _max_joint_subset(
    anchor_tag_cols: Sequence[int], columns: np.ndarray, n_min: int
) -> int:
    """Largest k such that some k-subset of the anchor's tags is contained in
    at least ``n_min`` of the given rows. Branch and bound, exact."""
    supports = [(int(columns[:, t].sum()), t) for t in anchor_tag_cols]
    usable = [(c, t) for c, t in supports if c >= n_min]
    usable.sort(key=lambda e: (-e[0], e[1]))
    order = [t for _c, t in usable]
    best = 0

    def descend(pos: int, cand: np.ndarray, depth: int):
        nonlocal best
        if depth > best:
            best = depth
        for k in range(pos, len(order)):
            if depth + (len(order) - k) <= best:
                break
            new = cand & columns[:, order[k]]
            if int(new.sum()) >= n_min:
                descend(k + 1, new, depth + 1)

    descend(0, np.ones(columns.shape[0], dtype=bool), 0)
    return best


def neighborhood_stats(
    embeddings: EmbeddingTable,
    tag_records: Sequence[ImageRecord],
    n_list: Sequence[int],
    alpha_list: Sequence[float],
    n_anchors: int = 200,
    seed: int = 0,
) -> NeighborhoodStats:
    """Shared-tag structure of exact nearest-neighbor sets vs the semantic side.

    For each sampled anchor: the representation side counts tags present in
    at least alpha*N of its N nearest neighbors (exact scan, ties broken by
    index); the semantic side finds the largest subset of the anchor's tags
    jointly present in at least N other images. Anchors without tags are
    skipped and counted.
    """
    ids, matrix, masks, vocab = _aligned(tag_records, embeddings)
    n = len(ids)
    max_n = max(n_list)
    if n <= max_n:
        raise ValueError(f"need more than {max_n} images, have {n}")
    columns = np.zeros((n, len(vocab)), dtype=bool)
    for i, m in enumerate(masks):
        while m:
            low = m & -m
            columns[i, low.bit_length() - 1] = True
            m ^= low

    rng = np.random.default_rng([seed, 0xA2C])
    anchor_rows = sorted(rng.choice(n, size=min(n_anchors, n), replace=False))
    alphas = [as_fraction(a) for a in alpha_list]

    repr_counts: dict[tuple[int, Fraction], list[int]] = {
        (nn, alpha): [] for nn in n_list for alpha in alphas
    }
    semantic_max: dict[int, list[int]] = {nn: [] for nn in n_list}
    semantic_indiv: dict[int, list[int]] = {nn: [] for nn in n_list}
    skipped = 0
    for a in anchor_rows:
        if masks[a] == 0:
            skipped += 1
            continue
        diff = matrix - matrix[a]
        dist = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((np.arange(n), dist))
        order = order[order != a][:max_n]
        anchor_tag_cols = np.nonzero(columns[a])[0].tolist()
        others = np.ones(n, dtype=bool)
        others[a] = False
        other_rows = columns[others]
        for nn in n_list:
            neighbors = order[:nn]
            occurrence = columns[neighbors].sum(axis=0)
            for alpha in alphas:
                # tag counts as shared when occurrence >= alpha * nn, exactly
                threshold = alpha * nn
                shared = int(
                    np.sum(occurrence * threshold.denominator >= threshold.numerator)
                )
                repr_counts[(nn, alpha)].append(shared)
            semantic_max[nn].append(
                _max_joint_subset(anchor_tag_cols, other_rows, nn)
            )
            semantic_indiv[nn].append(
                sum(1 for t in anchor_tag_cols if int(other_rows[:, t].sum()) >= nn)
            )

    used = len(anchor_rows) - skipped
    if used == 0:
        raise ValueError("all sampled anchors have empty tag sets")
    rows = tuple(
        NeighborhoodRow(nn, float(alpha), sum(repr_counts[(nn, alpha)]) / used)
        for nn in n_list
        for alpha in alphas
    )
    semantic_rows = tuple(
        SemanticRow(
            nn,
            sum(semantic_max[nn]) / used,
            sum(semantic_indiv[nn]) / used,
        )
        for nn in n_list
    )
    return NeighborhoodStats(
        rows=rows,
        semantic_rows=semantic_rows,
        n_anchors=used,
        n_skipped_empty=skipped,
        seed=seed,
    )


def format_distance_table(stats: DistanceStats) -> str:
    """Aligned text table of the distance rows."""
    lines = [
        f"{'shared tags':>14} {'mean':>8} {'std':>8} {'P(cond > random)':>18}"
    ]
    for row in stats.rows:
        if row.flag is not None:
            lines.append(f"{'d = ' + str(row.d):>14} {'(' + row.flag + ')':>36}")
            continue
        lines.append(
            f"{'d = ' + str(row.d):>14} {row.mean_distance:>8.2f} "
            f"{row.std_distance:>8.2f} {row.prob_exceeds_random:>18.2f}"
        )
    lines.append(f"pairs per row: {stats.n_pairs_requested}, seed: {stats.seed}")
    return "\n".join(lines) + "\n"


def format_neighborhood_table(stats: NeighborhoodStats) -> str:
    """Aligned text table: representation columns per alpha, semantic column."""
    alphas = sorted({row.alpha for row in stats.rows})
    n_values = sorted({row.n_neighbors for row in stats.rows})
    by_key = {(r.n_neighbors, r.alpha): r for r in stats.rows}
    by_n = {r.n_neighbors: r for r in stats.semantic_rows}
    header = (
        f"{'':>8}  "
        + "".join(f"alpha={a:<6.2f}" for a in alphas)
        + f"{'semantic':>10}"
    )
    lines = [header]
    for nn in n_values:
        cells = "".join(
            f"{by_key[(nn, a)].mean_shared_tags_repr:<12.2f}" for a in alphas
        )
        lines.append(
            f"{'N=' + str(nn):>8}  {cells}{by_n[nn].mean_max_shared_tags:>10.2f}"
        )
    lines.append(
        f"anchors: {stats.n_anchors} (skipped {stats.n_skipped_empty} empty), "
        f"seed: {stats.seed}"
    )
    return "\n".join(lines) + "\n"
