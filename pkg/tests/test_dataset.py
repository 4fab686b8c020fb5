"""Tests for cohort construction, splitting, standardization, and synthesis."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairhrv import dataset
from fairhrv.dataset import (
    AttributeCoding,
    BadStrength,
    Cohort,
    DegenerateGroup,
    LabeledWindow,
    MissingAttribute,
    NotBinary,
    TooSmall,
    binarize_anxiety,
    encode_protected,
    generate_synthetic,
    load_cohort,
    split_cohort,
    standardize,
    write_catalog_json,
    write_demographics_csv,
    write_labels_csv,
    write_windows_csv,
)
from fairhrv.fairness import disparate_impact


def make_cohort(n, seed=0, attribute="group"):
    rng = np.random.default_rng(seed)
    windows = []
    coding = AttributeCoding(mapping={"a": 1, "b": 0}, counts={"a": (n + 1) // 2, "b": n // 2})
    for i in range(n):
        windows.append(
            LabeledWindow(
                sample_id=f"s{i:05d}",
                participant_id=f"p{i % 7:03d}",
                features=rng.normal(size=(24, 25)),
                anxiety=int(rng.integers(0, 2)),
                protected={attribute: int(i < (n + 1) // 2)},
            )
        )
    return Cohort(tuple(windows), {attribute: coding})


class TestTypes:
    def test_window_shape_enforced(self):
        with pytest.raises(ValueError):
            LabeledWindow("s", "p", np.zeros((23, 25)), 0, {})

    def test_label_binary(self):
        with pytest.raises(ValueError):
            LabeledWindow("s", "p", np.zeros((24, 25)), 2, {})

    def test_cohort_requires_shared_keys(self):
        w1 = LabeledWindow("a", "p", np.zeros((24, 25)), 0, {"age": 1})
        w2 = LabeledWindow("b", "p", np.zeros((24, 25)), 0, {"income": 1})
        with pytest.raises(ValueError):
            Cohort((w1, w2))

    def test_catalog_majority_invariant(self):
        w = LabeledWindow("a", "p", np.zeros((24, 25)), 0, {"age": 1})
        bad = AttributeCoding(mapping={"x": 1, "y": 0}, counts={"x": 10, "y": 20})
        with pytest.raises(ValueError):
            Cohort((w,), {"age": bad})

    def test_missing_attribute(self):
        cohort = make_cohort(8)
        with pytest.raises(MissingAttribute):
            cohort.protected_values("nope")


class TestBinarize:
    def test_mean_threshold_with_tie_negative(self):
        result = binarize_anxiety({"p": [1, 2, 3, 4, 5]})
        assert result.labels["p"] == [0, 0, 0, 1, 1]
        assert not result.degenerate

    def test_zero_variance_flagged(self):
        result = binarize_anxiety({"p": [3, 3, 3]})
        assert result.labels["p"] == [0, 0, 0]
        assert "p" in result.degenerate

    def test_two_scores(self):
        assert binarize_anxiety({"p": [20, 80]}).labels["p"] == [0, 1]

    @given(
        st.lists(st.integers(-100, 100), min_size=1, max_size=30),
        st.integers(-50, 50),
    )
    @settings(max_examples=100, deadline=None)
    def test_constant_shift_invariance(self, scores, shift):
        # Integer grid keeps the shifted mean exactly representable; with
        # arbitrary floats, rounding at the tie boundary can flip a label.
        base = binarize_anxiety({"p": scores}).labels["p"]
        shifted = binarize_anxiety({"p": [s + shift for s in scores]}).labels["p"]
        assert base == shifted


class TestEncodeProtected:
    def test_majority_rule(self):
        raw = {f"p{i}": ("A" if i < 120 else "B") for i in range(200)}
        codes, coding = encode_protected(raw, "site")
        assert coding.mapping == {"A": 1, "B": 0}
        assert coding.counts == {"A": 120, "B": 80}
        assert codes["p0"] == 1 and codes["p199"] == 0

    def test_tie_breaks_lexicographically_with_warning(self):
        raw = {f"p{i}": ("B" if i % 2 else "A") for i in range(10)}
        with pytest.warns(RuntimeWarning):
            _, coding = encode_protected(raw, "site")
        assert coding.mapping["A"] == 1

    def test_degenerate(self):
        with pytest.raises(DegenerateGroup):
            encode_protected({"p1": "A", "p2": "A"}, "site")

    def test_not_binary(self):
        with pytest.raises(NotBinary):
            encode_protected({"p1": "A", "p2": "B", "p3": "C"}, "site")


class TestSplit:
    def test_paper_sized_split(self):
        split = split_cohort(make_cohort(920), seed=1)
        assert len(split.train) == 690
        assert len(split.test) == 230

    def test_minimum_split(self):
        split = split_cohort(make_cohort(4), seed=1)
        assert len(split.train) == 3
        assert len(split.test) == 1

    def test_too_small(self):
        with pytest.raises(TooSmall):
            split_cohort(make_cohort(3), seed=1)

    def test_determinism(self):
        cohort = make_cohort(50)
        a = split_cohort(cohort, seed=9)
        b = split_cohort(cohort, seed=9)
        assert [w.sample_id for w in a.train.windows] == [w.sample_id for w in b.train.windows]

    def test_multiset_preservation(self):
        cohort = make_cohort(41)
        split = split_cohort(cohort, seed=3)
        got = sorted(w.sample_id for w in split.train.windows + split.test.windows)
        assert got == sorted(w.sample_id for w in cohort.windows)
        assert not set(w.sample_id for w in split.train.windows) & set(
            w.sample_id for w in split.test.windows
        )

    def test_by_participant_keeps_participants_whole(self):
        cohort = make_cohort(70)
        split = split_cohort(cohort, seed=3, by_participant=True)
        train_p = {w.participant_id for w in split.train.windows}
        test_p = {w.participant_id for w in split.test.windows}
        assert not train_p & test_p


class TestStandardize:
    def _tiny_split(self, train_cols, test_cols):
        def build(cols, prefix):
            windows = []
            for i, value in enumerate(cols):
                feats = np.full((24, 25), float(value))
                windows.append(LabeledWindow(f"{prefix}{i}", "p0", feats, 0, {}))
            return Cohort(tuple(windows))

        return dataset.SplitCohort(train=build(train_cols, "tr"), test=build(test_cols, "te"), seed=0)

    def test_two_point_column(self):
        out = standardize(self._tiny_split([1.0, 3.0], [2.0]))
        values = out.train.feature_tensor()
        assert np.allclose(np.unique(values), [-1.0, 1.0])
        # test value equal to the train mean maps to zero
        assert np.allclose(out.test.feature_tensor(), 0.0)

    def test_constant_column_maps_to_zero(self):
        out = standardize(self._tiny_split([5.0, 5.0, 5.0], [7.0]))
        assert np.allclose(out.train.feature_tensor(), 0.0)

    def test_train_statistics_normalized(self):
        cohort = make_cohort(60, seed=4)
        out = standardize(split_cohort(cohort, seed=2))
        stacked = out.train.feature_tensor().reshape(-1, 25)
        assert np.abs(stacked.mean(axis=0)).max() < 1e-9
        assert np.abs(stacked.std(axis=0) - 1.0).max() < 1e-9


class TestSynthetic:
    def test_unbiased_dir_near_one(self):
        for seed in range(10):
            cohort = generate_synthetic(2000, 0.0, seed)
            ratio = disparate_impact(cohort.labels(), cohort.protected_values("group"))
            assert abs(ratio - 1.0) <= 0.05

    def test_full_bias_dir_low(self):
        cohort = generate_synthetic(2000, 1.0, 0)
        ratio = disparate_impact(cohort.labels(), cohort.protected_values("group"))
        assert ratio <= 0.6

    def test_determinism_byte_identical(self):
        a = generate_synthetic(200, 0.5, 123)
        b = generate_synthetic(200, 0.5, 123)
        assert len(a) == len(b)
        for wa, wb in zip(a.windows, b.windows):
            assert wa.sample_id == wb.sample_id
            assert wa.anxiety == wb.anxiety
            assert wa.protected == wb.protected
            assert wa.features.tobytes() == wb.features.tobytes()

    def test_bad_strength(self):
        with pytest.raises(BadStrength):
            generate_synthetic(100, 1.5, 0)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            generate_synthetic(39, 0.5, 0)

    def test_zero_strength_decorrelates_features(self):
        cohort = generate_synthetic(2000, 0.0, 7)
        feats = cohort.feature_tensor().mean(axis=1)
        groups = cohort.protected_values("group")
        prot_cols = [dataset.FEATURE_NAMES.index(c) for c in dataset.PROTECTED_SIGNAL_COLUMNS]
        gap = feats[groups == 1][:, prot_cols].mean() - feats[groups == 0][:, prot_cols].mean()
        assert abs(gap) < 0.1

    def test_protected_columns_shifted_when_biased(self):
        cohort = generate_synthetic(2000, 1.0, 7)
        feats = cohort.feature_tensor().mean(axis=1)
        groups = cohort.protected_values("group")
        prot_cols = [dataset.FEATURE_NAMES.index(c) for c in dataset.PROTECTED_SIGNAL_COLUMNS]
        gap = feats[groups == 1][:, prot_cols].mean() - feats[groups == 0][:, prot_cols].mean()
        assert gap > 1.0


class TestInterchange:
    def test_round_trip(self, tmp_path):
        cohort = generate_synthetic(50, 0.7, 5)
        write_windows_csv(tmp_path / "w.csv", cohort)
        write_labels_csv(tmp_path / "l.csv", cohort)
        write_demographics_csv(tmp_path / "d.csv", cohort)
        write_catalog_json(tmp_path / "catalog.json", cohort)

        loaded = load_cohort(tmp_path / "w.csv", tmp_path / "l.csv", tmp_path / "d.csv")
        assert len(loaded) == len(cohort)
        for wa, wb in zip(cohort.windows, loaded.windows):
            assert wa.sample_id == wb.sample_id
            assert wa.anxiety == wb.anxiety
            assert wa.protected == wb.protected
            assert np.allclose(wa.features, wb.features)
        assert loaded.attribute_catalog["group"].mapping == cohort.attribute_catalog["group"].mapping

    def test_missing_label_detected(self, tmp_path):
        cohort = generate_synthetic(40, 0.0, 1)
        write_windows_csv(tmp_path / "w.csv", cohort)
        (tmp_path / "l.csv").write_text("sample_id,anxiety\ns000000,1\n")
        with pytest.raises(ValueError, match="no anxiety label"):
            load_cohort(tmp_path / "w.csv", tmp_path / "l.csv")

    def test_catalog_json_schema(self, tmp_path):
        import json

        cohort = generate_synthetic(40, 0.3, 2)
        write_catalog_json(tmp_path / "c.json", cohort)
        payload = json.loads((tmp_path / "c.json").read_text())
        assert payload["group"]["mapping"] == {"maj": 1, "min": 0}
        assert sum(payload["group"]["counts"].values()) == len(
            {w.participant_id for w in cohort.windows}
        )
