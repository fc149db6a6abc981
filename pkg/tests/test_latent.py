import random
from fractions import Fraction

import numpy as np
import pytest

import tagminer.latent as latent_mod
from tagminer.core import ImageRecord
from tagminer.ingest import EmbeddingTable
from tagminer.latent import distance_stats, format_distance_table, format_neighborhood_table, neighborhood_stats
from tagminer.synth import image_embeddings

from naive_oracle import levelwise_max_shared


def indicator_world(n_images=500, n_tags=20, marginal=0.5, sigma=0.1, seed=88):
    rng = random.Random(seed)
    vocab = [f"t{j:02d}" for j in range(n_tags)]
    records = [
        ImageRecord(
            f"img{i:04d}",
            "c",
            frozenset(t for t in vocab if rng.random() < marginal),
            True,
            "train",
        )
        for i in range(n_images)
    ]
    vectors = image_embeddings(records, n_tags, noise_sigma=sigma, seed=seed)
    table = EmbeddingTable(list(vectors), np.asarray(list(vectors.values())))
    return records, table


class TestDistanceStats:
    def test_monotone_in_shared_tags(self):
        records, table = indicator_world()
        stats = distance_stats(table, records, d_list=[0, 2, 4, 6, 8], n_pairs=8000, seed=7)
        means = [row.mean_distance for row in stats.rows]
        probs = [row.prob_exceeds_random for row in stats.rows]
        assert all(a > b for a, b in zip(means, means[1:]))
        assert all(a > b for a, b in zip(probs, probs[1:]))

    def test_unconditioned_row_is_symmetric(self):
        records, table = indicator_world()
        stats = distance_stats(table, records, d_list=[0], n_pairs=20000, seed=3)
        assert abs(stats.rows[0].prob_exceeds_random - 0.5) < 0.02

    def test_impossible_threshold_flagged(self):
        records, table = indicator_world(n_images=60)
        stats = distance_stats(table, records, d_list=[0, 25], n_pairs=500, seed=1)
        flagged = stats.rows[1]
        assert flagged.flag == "insufficient_images"
        assert flagged.mean_distance is None

    def test_too_rare_condition_raises(self, monkeypatch):
        # two images could satisfy d=10 by tag count, but never with each other
        vocab = [f"t{j:02d}" for j in range(20)]
        records = [
            ImageRecord("big0", "c", frozenset(vocab[:10]), True, "train"),
            ImageRecord("big1", "c", frozenset(vocab[10:]), True, "train"),
        ] + [
            ImageRecord(f"x{i}", "c", frozenset({vocab[i % 20]}), True, "train")
            for i in range(60)
        ]
        vectors = image_embeddings(records, 20, noise_sigma=0.1, seed=5)
        table = EmbeddingTable(list(vectors), np.asarray(list(vectors.values())))
        monkeypatch.setattr(latent_mod, "REJECTION_CAP", 20_000)
        with pytest.raises(RuntimeError, match="too rare"):
            distance_stats(table, records, d_list=[10], n_pairs=100, seed=2)

    def test_deterministic_given_seed(self):
        records, table = indicator_world(n_images=150)
        a = distance_stats(table, records, d_list=[0, 3], n_pairs=2000, seed=11)
        b = distance_stats(table, records, d_list=[0, 3], n_pairs=2000, seed=11)
        assert a == b

    def test_missing_embedding_named(self):
        records, table = indicator_world(n_images=50)
        records = records + [ImageRecord("ghost", "c", frozenset({"t00"}), True, "train")]
        with pytest.raises(KeyError, match="'ghost'"):
            distance_stats(table, records, d_list=[0], n_pairs=10, seed=0)


def naive_repr_counts(records, table, n_neighbors, alpha: Fraction):
    """Independent per-anchor reimplementation over ALL anchors."""
    ids = sorted(r.id for r in records)
    by_id = {r.id: r for r in records}
    out = []
    for anchor in ids:
        if not by_id[anchor].tags:
            continue
        dists = sorted(
            (float(np.linalg.norm(table.raw_vector(other) - table.raw_vector(anchor))), i)
            for i, other in enumerate(ids)
            if other != anchor
        )
        neighbors = [ids[i] for _, i in dists[:n_neighbors]]
        vocab = sorted({t for r in records for t in r.tags})
        count = 0
        for tag in vocab:
            occ = sum(1 for n in neighbors if tag in by_id[n].tags)
            if occ * alpha.denominator >= alpha.numerator * n_neighbors:
                count += 1
        out.append(count)
    return sum(out) / len(out)


class TestNeighborhoodStats:
    def test_identical_tag_sets_degenerate(self):
        rng = np.random.default_rng(0)
        tags = frozenset({"a", "b", "c"})
        records = [
            ImageRecord(f"i{i}", "c", tags, True, "train") for i in range(40)
        ]
        table = EmbeddingTable(
            [f"i{i}" for i in range(40)], rng.normal(size=(40, 6))
        )
        stats = neighborhood_stats(
            table, records, n_list=[10], alpha_list=[0.6, 1.0], n_anchors=40, seed=0
        )
        for row in stats.rows:
            assert row.mean_shared_tags_repr == 3.0
        assert stats.semantic_rows[0].mean_max_shared_tags == 3.0

    def test_repr_side_matches_naive_scan(self):
        records, table = indicator_world(n_images=60, n_tags=8, seed=17)
        stats = neighborhood_stats(
            table, records, n_list=[7], alpha_list=[0.7], n_anchors=60, seed=1
        )
        expected = naive_repr_counts(records, table, 7, Fraction(7, 10))
        assert stats.rows[0].mean_shared_tags_repr == pytest.approx(expected, abs=1e-12)

    def test_semantic_max_matches_levelwise_oracle(self):
        records, table = indicator_world(n_images=200, n_tags=12, marginal=0.3, seed=23)
        stats = neighborhood_stats(
            table, records, n_list=[20], alpha_list=[0.7], n_anchors=200, seed=5
        )
        by_id = {r.id: r for r in records}
        ids = sorted(by_id)
        values = []
        for anchor in ids:
            if not by_id[anchor].tags:
                continue
            others = [by_id[i].tags for i in ids if i != anchor]
            values.append(levelwise_max_shared(by_id[anchor].tags, others, 20))
        expected = sum(values) / len(values)
        assert stats.semantic_rows[0].mean_max_shared_tags == pytest.approx(
            expected, abs=1e-12
        )

    def test_repr_counts_non_increasing_in_alpha(self):
        records, table = indicator_world(n_images=120, seed=29)
        stats = neighborhood_stats(
            table,
            records,
            n_list=[15],
            alpha_list=[0.5, 0.6, 0.7, 0.8, 0.9],
            n_anchors=50,
            seed=3,
        )
        values = [r.mean_shared_tags_repr for r in stats.rows]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_empty_tag_anchors_skipped_and_counted(self):
        rng = np.random.default_rng(1)
        records = [
            ImageRecord(f"i{i}", "c", frozenset() if i % 3 == 0 else frozenset({"a"}), True, "train")
            for i in range(30)
        ]
        table = EmbeddingTable([f"i{i}" for i in range(30)], rng.normal(size=(30, 4)))
        stats = neighborhood_stats(
            table, records, n_list=[5], alpha_list=[0.6], n_anchors=30, seed=0
        )
        assert stats.n_skipped_empty == 10
        assert stats.n_anchors == 20

    def test_needs_more_images_than_neighbors(self):
        records, table = indicator_world(n_images=30)
        with pytest.raises(ValueError, match="need more than"):
            neighborhood_stats(table, records, n_list=[30], alpha_list=[0.6], seed=0)

    def test_deterministic_given_seed(self):
        records, table = indicator_world(n_images=90, seed=31)
        kwargs = dict(n_list=[10], alpha_list=[0.6], n_anchors=25, seed=9)
        assert neighborhood_stats(table, records, **kwargs) == neighborhood_stats(
            table, records, **kwargs
        )


class TestTextTables:
    def test_distance_table_layout(self):
        records, table = indicator_world(n_images=80)
        stats = distance_stats(table, records, d_list=[0, 2], n_pairs=500, seed=0)
        text = format_distance_table(stats)
        assert "d = 0" in text and "d = 2" in text
        assert "P(cond > random)" in text

    def test_neighborhood_table_layout(self):
        records, table = indicator_world(n_images=80)
        stats = neighborhood_stats(
            table, records, n_list=[10, 20], alpha_list=[0.6, 0.8], n_anchors=20, seed=0
        )
        text = format_neighborhood_table(stats)
        assert "N=10" in text and "N=20" in text
        assert "semantic" in text
