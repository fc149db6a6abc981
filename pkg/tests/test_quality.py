import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagminer.core import MinerConfig
from tagminer.ingest import EmbeddingTable
from tagminer.miner import mine_exhaustive
from tagminer.quality import auroc, quality_to_jsonable, score_modes, similarity
from tagminer.synth import (
    default_specs,
    description_embeddings,
    generate_records,
    image_embeddings,
    vocabulary_of,
)

from conftest import dataset_from_records
from naive_oracle import brute_auroc


def table_from(vectors: dict[str, list[float]]) -> EmbeddingTable:
    return EmbeddingTable(list(vectors), np.asarray(list(vectors.values()), float))


class TestSimilarity:
    def test_identical_vectors(self):
        images = table_from({"x": [1.0, 0.0]})
        descs = table_from({"m": [2.0, 0.0]})  # normalized to the same direction
        assert similarity("x", "m", images, descs) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        images = table_from({"x": [1.0, 0.0]})
        descs = table_from({"m": [0.0, 5.0]})
        assert similarity("x", "m", images, descs) == pytest.approx(0.0, abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=16), rng.normal(size=16)
        images = table_from({"x": a.tolist()})
        descs = table_from({"m": b.tolist()})
        ua, ub = a / np.linalg.norm(a), b / np.linalg.norm(b)
        expected = sum(float(x) * float(y) for x, y in zip(ua, ub))
        assert similarity("x", "m", images, descs) == pytest.approx(expected, abs=1e-12)

    def test_missing_key_named(self):
        images = table_from({"x": [1.0, 0.0]})
        descs = table_from({"m": [1.0, 0.0]})
        with pytest.raises(KeyError, match="'ghost'"):
            similarity("ghost", "m", images, descs)

    def test_dimension_mismatch(self):
        images = table_from({"x": [1.0, 0.0]})
        descs = table_from({"m": [1.0, 0.0, 0.0]})
        with pytest.raises(ValueError, match="dimension mismatch"):
            similarity("x", "m", images, descs)


class TestAuroc:
    def test_worked_example(self):
        # pairs: (.9>.8) (.9>.6) (.7<.8) (.7>.6) -> 3/4
        assert auroc([0.9, 0.7], [0.8, 0.6]) == pytest.approx(0.75)

    def test_all_ties_give_half(self):
        assert auroc([1.0] * 5, [1.0] * 7) == pytest.approx(0.5)

    def test_perfect_separation(self):
        assert auroc([3.0, 2.0], [1.0, 0.5, 0.0]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            auroc([], [1.0])
        with pytest.raises(ValueError):
            auroc([1.0], [])

    def test_matches_brute_force_with_heavy_ties(self):
        rng = random.Random(0)
        for _ in range(200):
            inside = [rng.choice([0.0, 0.25, 0.5, 1.0]) for _ in range(rng.randint(1, 12))]
            outside = [rng.choice([0.0, 0.25, 0.5, 1.0]) for _ in range(rng.randint(1, 12))]
            assert auroc(inside, outside) == pytest.approx(
                brute_auroc(inside, outside), abs=1e-12
            )


score_lists = st.lists(
    st.floats(-10, 10, allow_nan=False).map(lambda x: round(x, 2)),
    min_size=1,
    max_size=30,
)


@settings(max_examples=60, deadline=None)
@given(score_lists, score_lists)
def test_auroc_complement_identity(a, b):
    assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(score_lists, score_lists)
def test_auroc_invariant_under_increasing_transforms(a, b):
    base = auroc(a, b)
    assert auroc([2 * x + 1 for x in a], [2 * y + 1 for y in b]) == base
    assert auroc([math.exp(x) for x in a], [math.exp(y) for y in b]) == base
    assert auroc([x**3 for x in a], [y**3 for y in b]) == base


def constructed_world():
    """Two modes; inside images equal their description, outside orthogonal."""
    from conftest import make_records

    tag_sets = [{"p"}] * 10 + [set()] * 10
    correct = [False] * 10 + [True] * 10
    records = make_records("c", tag_sets, correct)
    dataset = dataset_from_records(records)
    config = MinerConfig(s=5, a=0.3, l=1, freq_threshold=1)
    report = mine_exhaustive(dataset, config)
    assert [m.tags for m in report.modes] == [("p",)]
    inside_ids = [r.id for r in records if "p" in r.tags]
    outside_ids = [r.id for r in records if "p" not in r.tags]
    images = table_from(
        {**{i: [1.0, 0.0] for i in inside_ids}, **{i: [0.0, 1.0] for i in outside_ids}}
    )
    descs = table_from({report.modes[0].description: [1.0, 0.0]})
    return report, images, descs, dataset


class TestScoreModes:
    def test_constructed_separation(self):
        report, images, descs, dataset = constructed_world()
        quality = score_modes(report, images, descs, dataset, seed=0)
        (row,) = quality.per_mode
        assert row.mean_sim == pytest.approx(1.0)
        assert row.std_sim == pytest.approx(0.0, abs=1e-12)
        assert row.auroc == 1.0
        assert row.n_inside == 10
        assert row.n_outside == 10  # default matches the group size

    def test_fixed_seed_is_deterministic(self):
        report, images, descs, dataset = constructed_world()
        a = score_modes(report, images, descs, dataset, n_outside_per_mode=5, seed=9)
        b = score_modes(report, images, descs, dataset, n_outside_per_mode=5, seed=9)
        assert quality_to_jsonable(a) == quality_to_jsonable(b)

    def test_no_outside_images_flags_auroc(self):
        # a loaded report can name a group that covers a whole class of the
        # dataset in hand; the AUROC is then undefined, not an error
        from conftest import make_records
        from tagminer.core import FailureMode
        from tagminer.miner import MineReport

        records = make_records("c", [{"p"}] * 10, [False] * 10)
        dataset = dataset_from_records(records)
        mode = FailureMode("c", ("p",), 10, 0.0, 0.5, 0.5)
        report = MineReport(config=MinerConfig(s=5, a=0.3, freq_threshold=1), modes=[mode])
        images = table_from({r.id: [1.0, 0.0] for r in records})
        descs = table_from({mode.description: [1.0, 0.0]})
        quality = score_modes(report, images, descs, dataset, seed=0)
        assert quality.per_mode[0].auroc is None
        assert quality.mean_auroc is None

    def test_missing_description_embedding_named(self):
        report, images, _descs, dataset = constructed_world()
        empty_descs = table_from({"somebody else": [1.0, 0.0]})
        with pytest.raises(KeyError, match="c: p"):
            score_modes(report, images, empty_descs, dataset, seed=0)

    def test_indicator_blocks_give_high_auroc(self):
        specs = default_specs(n_classes=3, n_images=800, seed=51)
        records, _ = generate_records(specs, seed=51)
        dataset = dataset_from_records(records, freq_threshold=10)
        config = MinerConfig(s=30, a=0.55, l=3, freq_threshold=10)
        report = mine_exhaustive(dataset, config)
        assert report.modes
        vocab = vocabulary_of(records)
        images = image_embeddings(records, len(vocab), noise_sigma=0.05, seed=51)
        descs = description_embeddings(
            {m.description: list(m.tags) for m in report.modes}, vocab, len(vocab)
        )
        image_table = EmbeddingTable(list(images), np.asarray(list(images.values())))
        desc_table = EmbeddingTable(list(descs), np.asarray(list(descs.values())))
        quality = score_modes(report, image_table, desc_table, dataset, seed=51)
        for row in quality.per_mode:
            assert row.auroc is not None and row.auroc > 0.9

    def test_input_order_does_not_matter(self):
        specs = default_specs(n_classes=2, n_images=400, seed=52)
        records, _ = generate_records(specs, seed=52)
        vocab = vocabulary_of(records)
        images = image_embeddings(records, len(vocab), noise_sigma=0.1, seed=52)
        image_table = EmbeddingTable(list(images), np.asarray(list(images.values())))
        config = MinerConfig(s=30, a=0.55, l=2, freq_threshold=10)

        dataset_fwd = dataset_from_records(records, freq_threshold=10)
        report = mine_exhaustive(dataset_fwd, config)
        assert report.modes
        descs = description_embeddings(
            {m.description: list(m.tags) for m in report.modes}, vocab, len(vocab)
        )
        desc_table = EmbeddingTable(list(descs), np.asarray(list(descs.values())))

        shuffled = list(records)
        random.Random(0).shuffle(shuffled)
        dataset_rev = dataset_from_records(shuffled, freq_threshold=10)
        a = score_modes(report, image_table, desc_table, dataset_fwd, seed=1)
        b = score_modes(report, image_table, desc_table, dataset_rev, seed=1)
        assert quality_to_jsonable(a) == quality_to_jsonable(b)

    def test_pooled_stats_match_two_pass_oracle(self):
        report, images, descs, dataset = constructed_world()
        quality = score_modes(report, images, descs, dataset, seed=0)
        scores = [
            similarity(f"c-{i:04d}", report.modes[0].description, images, descs)
            for i in range(10)
        ]
        mean = sum(scores) / len(scores)
        var = sum((s - mean) ** 2 for s in scores) / len(scores)
        assert quality.pooled_mean_sim == pytest.approx(mean, abs=1e-10)
        assert quality.pooled_std_sim == pytest.approx(math.sqrt(var), abs=1e-10)
