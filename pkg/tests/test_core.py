import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagminer.core import (
    MinerConfig,
    as_fraction,
    build_class_index,
    drop_met,
    group_accuracy,
    group_mask,
    margin_met,
    normalize_tag,
)

from conftest import dataset_from_records, make_records, random_records


class TestNormalizeTag:
    def test_lowercase_trim_collapse(self):
        assert normalize_tag("  Bengal   Tiger ") == "bengal tiger"
        assert normalize_tag("SNOW") == "snow"
        assert normalize_tag("grass") == "grass"

    def test_whitespace_only_becomes_empty(self):
        assert normalize_tag("   ") == ""


class TestAsFraction:
    def test_accepted_forms(self):
        assert as_fraction(0.30) == Fraction(3, 10)
        assert as_fraction("0.30") == Fraction(3, 10)
        assert as_fraction("30%") == Fraction(3, 10)
        assert as_fraction("3/10") == Fraction(3, 10)
        assert as_fraction(Fraction(1, 3)) == Fraction(1, 3)
        assert as_fraction(1) == 1
        assert as_fraction("1e-3") == Fraction(1, 1000)

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            as_fraction("three tenths")
        with pytest.raises(TypeError):
            as_fraction(None)


class TestBuildClassIndex:
    def test_threshold_filters_vocabulary(self):
        # 3 images, tags {a,b}, {a}, {b}, threshold 2 -> both tags kept, popcount 2
        records = make_records("c", [{"a", "b"}, {"a"}, {"b"}], [True, True, True])
        index = build_class_index(records, freq_threshold=2)
        assert index.vocabulary == ("a", "b")
        assert index.tag_masks["a"].bit_count() == 2
        assert index.tag_masks["b"].bit_count() == 2

    def test_all_correct_baseline(self):
        records = make_records("c", [{"a"}] * 4, [True] * 4)
        index = build_class_index(records, freq_threshold=1)
        assert index.baseline_accuracy == 1.0

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError, match="empty class"):
            build_class_index([], freq_threshold=1)

    def test_mixed_labels_rejected(self):
        records = make_records("c", [{"a"}], [True]) + make_records(
            "d", [{"a"}], [True]
        )
        with pytest.raises(ValueError, match="mixed class labels"):
            build_class_index(records, freq_threshold=1)

    def test_partial_record_rejected(self):
        records = make_records("c", [{"a"}], [None])
        with pytest.raises(ValueError, match="no correctness bit"):
            build_class_index(records, freq_threshold=1)

    def test_threshold_above_class_size_gives_empty_vocabulary(self):
        records = make_records("c", [{"a"}] * 3, [True] * 3)
        index = build_class_index(records, freq_threshold=10)
        assert index.vocabulary == ()

    def test_exact_baseline_counts(self):
        records = make_records("c", [{"a"}] * 5, [True, True, False, True, False])
        index = build_class_index(records, freq_threshold=1)
        assert index.correct_count == 3
        assert index.correct_mask.bit_count() == 3
        assert index.baseline_fraction == Fraction(3, 5)


class TestGroupMask:
    def test_bitwise_and(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        assert index.tag_masks["a"] == 0b1100
        assert index.tag_masks["b"] == 0b1010
        assert group_mask(index, {"a", "b"}) == 0b1000

    def test_empty_set_selects_whole_class(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        assert group_mask(index, set()) == 0b1111

    def test_unknown_tag_named_in_error(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        with pytest.raises(KeyError, match="'zebra'"):
            group_mask(index, {"zebra"})

    def test_matches_per_record_scan(self):
        rng = random.Random(7)
        records = random_records(rng, "c", 80, 8)
        index = build_class_index(records, freq_threshold=1)
        for _ in range(25):
            tags = rng.sample(list(index.vocabulary), rng.randint(1, 3))
            mask = group_mask(index, tags)
            expected = sum(1 for r in records if set(tags) <= r.tags)
            assert mask.bit_count() == expected


class TestGroupAccuracy:
    def test_direct_count(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        # mask 1110 against correct mask 0110 -> two correct of three
        assert index.correct_mask == 0b0110
        assert group_accuracy(index, 0b1110) == pytest.approx(2 / 3)

    def test_full_mask_equals_baseline(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        assert group_accuracy(index, index.full_mask) == index.baseline_accuracy

    def test_empty_mask_rejected(self, tiny_class_records):
        index = build_class_index(tiny_class_records, freq_threshold=1)
        with pytest.raises(ValueError, match="empty group"):
            group_accuracy(index, 0)


@st.composite
def incidence(draw):
    n_images = draw(st.integers(3, 40))
    n_tags = draw(st.integers(1, 6))
    vocab = [f"t{j}" for j in range(n_tags)]
    tag_sets = [
        {t for t in vocab if draw(st.booleans())} for _ in range(n_images)
    ]
    correct = [draw(st.booleans()) for _ in range(n_images)]
    return make_records("c", tag_sets, correct), vocab


@settings(max_examples=40, deadline=None)
@given(incidence())
def test_support_anti_monotone_and_intersection(data):
    records, vocab = data
    index = build_class_index(records, freq_threshold=1)
    present = list(index.vocabulary)
    if not present:
        return
    subset = present[: max(1, len(present) // 2)]
    superset = present
    assert group_mask(index, superset).bit_count() <= group_mask(index, subset).bit_count()
    combined = index.full_mask
    for tag in subset:
        combined &= group_mask(index, [tag])
    assert combined == group_mask(index, subset)


@settings(max_examples=40, deadline=None)
@given(incidence())
def test_empty_group_accuracy_is_baseline(data):
    records, _ = data
    index = build_class_index(records, freq_threshold=1)
    assert group_accuracy(index, group_mask(index, set())) == index.baseline_accuracy


def test_bit_position_id_round_trip():
    rng = random.Random(3)
    records = random_records(rng, "c", 50, 5)
    dataset = dataset_from_records(records)
    index = dataset.classes["c"]
    for rec in records:
        assert index.id_at(index.bit_of(rec.id)) == rec.id
    assert dataset.id_at("c", dataset.bit_of("c", records[7].id)) == records[7].id


def test_masks_fit_image_count():
    rng = random.Random(11)
    records = random_records(rng, "c", 37, 6)
    index = build_class_index(records, freq_threshold=1)
    for mask in index.tag_masks.values():
        assert mask >> index.image_count == 0
    assert index.correct_mask >> index.image_count == 0


class TestMinerConfig:
    def test_defaults_match_documented_schedule(self):
        config = MinerConfig()
        assert config.b_schedule == (
            Fraction(1, 10),
            Fraction(1, 20),
            Fraction(1, 40),
        )

    def test_b_extension_halves(self):
        config = MinerConfig()
        assert config.b_for(2) == Fraction(1, 10)
        assert config.b_for(4) == Fraction(1, 40)
        assert config.b_for(5) == Fraction(1, 80)
        assert config.b_for(6) == Fraction(1, 160)
        assert config.b_for(1) is None

    def test_accepts_mixed_threshold_forms(self):
        config = MinerConfig(a="30%", b_schedule=["0.10", 0.05])
        assert config.a == Fraction(3, 10)
        assert config.b_schedule == (Fraction(1, 10), Fraction(1, 20))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"s": 0},
            {"a": 0},
            {"a": 1},
            {"b_schedule": []},
            {"b_schedule": [0.5, 1.5]},
            {"l": 0},
            {"freq_threshold": 0},
            {"strategy": "magic"},
            {"greedy_beam_width": 0},
            {"seed": -1},
            {"seed": 2**64},
        ],
    )
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            MinerConfig(**kwargs)

    def test_jsonable_round_trip(self):
        config = MinerConfig(s=12, a="25%", l=4, strategy="greedy")
        assert MinerConfig(**config.to_jsonable()) == config


class TestExactPredicates:
    def test_drop_boundary_inclusive(self):
        # accuracy 6/10 vs baseline 9/10 with a = 3/10: exactly on boundary
        assert drop_met(6, 10, 9, 10, Fraction(3, 10))
        assert not drop_met(61, 100, 9, 10, Fraction(3, 10))

    def test_margin_boundary_inclusive(self):
        # removal accuracy 5/10 vs group 4/10 with b = 1/10: exactly on boundary
        assert margin_met(5, 10, 4, 10, Fraction(1, 10))
        assert not margin_met(49, 100, 4, 10, Fraction(1, 10))

    def test_no_float_rounding(self):
        # 1/3 vs 2/3 - 1/3: equal exactly, floats would disagree
        assert drop_met(1, 3, 2, 3, Fraction(1, 3))
