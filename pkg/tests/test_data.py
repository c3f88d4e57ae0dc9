import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from losml.data import (
    ColumnSpec,
    OutcomeSpec,
    Table,
    dichotomize_outcome,
    load_csv,
    load_schema,
    one_hot_encode,
    percentile,
    save_schema,
    stratified_kfold,
    stratified_split,
    write_csv,
)
from losml.errors import (
    DegenerateOutcome,
    MissingCellsPresent,
    SchemaError,
    TypeParseError,
    UnknownCategory,
    UnknownColumn,
)

from conftest import make_table


def small_table():
    return make_table(
        [("age", "patient", "continuous", None),
         ("sex", "patient", "categorical", ("F", "M")),
         ("beds", "system", "categorical", ("<50", "50-99", "100+")),
         ("los_days", "outcome", "continuous", None)],
        [[70.5, 81.0, None, 66.0],
         ["F", "M", "M", None],
         ["<50", "100+", "50-99", "100+"],
         [3, 12, 7, 9]],
    )


class TestPercentile:
    def test_interpolates_between_order_statistics(self):
        assert percentile([1, 2, 3, 4], 0.75) == pytest.approx(3.25)

    def test_midpoint_of_two_values(self):
        assert percentile([0, 10], 0.5) == 5

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0.01, 0.99))
    def test_matches_numpy_linear_method(self, values, q):
        assert percentile(values, q) == pytest.approx(np.percentile(values, 100 * q), rel=1e-12, abs=1e-9)


class TestDichotomize:
    def test_repeated_one_to_twelve_cuts_at_ten_days(self):
        los = np.tile(np.arange(1, 13), 100).astype(float)
        t = make_table([("los_days", "outcome", "continuous", None)], [los])
        labels, days = dichotomize_outcome(t, OutcomeSpec("los_days"))
        assert days == 10
        assert np.array_equal(labels, (los >= 10).astype(int))

    def test_strictly_above_cut_off(self):
        los = np.array([1, 2, 3, 4, 5, 6, 7, 8], dtype=float)
        t = make_table([("los_days", "outcome", "continuous", None)], [los])
        labels, _ = dichotomize_outcome(t, OutcomeSpec("los_days"))
        # cut-off 6.25 -> 7 and 8 are prolonged
        assert labels.tolist() == [0, 0, 0, 0, 0, 0, 1, 1]

    def test_constant_stays_are_degenerate(self):
        t = make_table([("los_days", "outcome", "continuous", None)], [[4.0] * 10])
        with pytest.raises(DegenerateOutcome):
            dichotomize_outcome(t, OutcomeSpec("los_days"))

    def test_training_rows_cut_off(self):
        los = np.arange(1, 21, dtype=float)
        t = make_table([("los_days", "outcome", "continuous", None)], [los])
        _, days = dichotomize_outcome(t, OutcomeSpec("los_days"), rows=np.arange(10))
        assert days == 8  # cut-off 7.75 over 1..10


class TestCsvAndSchema:
    def test_round_trip_preserves_values_and_missing(self, tmp_path):
        t = small_table()
        write_csv(t, tmp_path / "d.csv")
        save_schema(t.specs, tmp_path / "s.json")
        back = load_csv(tmp_path / "d.csv", load_schema(tmp_path / "s.json"))
        assert back.equals(t)

    def test_schema_round_trip_keeps_order_flag(self, tmp_path):
        specs = [ColumnSpec("beds", "system", "categorical", ("<50", "50-99"), ordered=True)]
        save_schema(specs, tmp_path / "s.json")
        assert load_schema(tmp_path / "s.json") == specs

    def test_unknown_category_is_reported_with_location(self, tmp_path):
        (tmp_path / "d.csv").write_text("sex\nF\nX\n")
        with pytest.raises(UnknownCategory) as exc:
            load_csv(tmp_path / "d.csv", [ColumnSpec("sex", "patient", "categorical", ("F", "M"))])
        assert exc.value.details["row"] == 3

    def test_unparseable_number(self, tmp_path):
        (tmp_path / "d.csv").write_text("age\n1\nold\n")
        with pytest.raises(TypeParseError):
            load_csv(tmp_path / "d.csv", [ColumnSpec("age", "patient", "continuous")])

    def test_header_mismatch(self, tmp_path):
        (tmp_path / "d.csv").write_text("weight\n1\n")
        with pytest.raises(UnknownColumn):
            load_csv(tmp_path / "d.csv", [ColumnSpec("age", "patient", "continuous")])

    def test_missing_schema_file(self, tmp_path):
        with pytest.raises(SchemaError):
            load_schema(tmp_path / "none.json")

    def test_two_outcome_columns_rejected(self):
        with pytest.raises(SchemaError):
            make_table([("a", "outcome", "continuous", None), ("b", "outcome", "continuous", None)], [[1], [2]])

    def test_bad_domain_rejected(self):
        with pytest.raises(SchemaError):
            ColumnSpec("x", "hospital", "continuous")

    def test_schema_json_is_plain_list(self, tmp_path):
        save_schema(small_table().specs, tmp_path / "s.json")
        raw = json.loads((tmp_path / "s.json").read_text())
        assert [d["name"] for d in raw] == ["age", "sex", "beds", "los_days"]


class TestEncoding:
    def complete(self):
        return make_table(
            [("a", "patient", "categorical", ("x", "y", "z")),
             ("b", "clinical", "categorical", ("no", "yes")),
             ("c", "system", "continuous", None)],
            [["x", "y", "z", "x"], ["no", "yes", "no", "no"], [1.0, 2.0, 3.0, 4.0]],
        )

    def test_full_mode_has_one_feature_per_category(self):
        em = one_hot_encode(self.complete(), "full")
        assert em.n_features == 6
        assert em.feature_names[:3] == ["a=x", "a=y", "a=z"]
        assert np.array_equal(em.X[:, :3].sum(axis=1), np.ones(4))

    def test_drop_first_omits_lexicographic_first(self):
        em = one_hot_encode(self.complete(), "drop_first")
        assert em.feature_names == ["a=y", "a=z", "b=yes", "c"]
        assert em.feature_kinds["b=yes"] == "binary" and em.feature_kinds["c"] == "continuous"

    def test_missing_cells_refused(self):
        with pytest.raises(MissingCellsPresent):
            one_hot_encode(small_table(), "full", columns=["age"])

    def test_source_map_and_subset(self):
        em = one_hot_encode(self.complete(), "full")
        assert em.features_of("a") == ["a=x", "a=y", "a=z"]
        sub = em.subset(["c", "a=y"])
        assert np.array_equal(sub.X[:, 0], [1, 2, 3, 4]) and sub.source_map["a=y"] == "a"


class TestSplits:
    def test_exact_per_class_arithmetic(self):
        y = np.r_[np.ones(25), np.zeros(75)].astype(int)
        s = stratified_split(y, 0.8, seed=3)
        assert y[s.train].sum() == 20 and (y[s.train] == 0).sum() == 60
        assert np.intersect1d(s.train, s.test).size == 0
        assert s.train.size + s.test.size == 100

    def test_split_is_seeded(self):
        y = np.random.default_rng(0).integers(0, 2, 300)
        a, b = stratified_split(y, 0.8, 7), stratified_split(y, 0.8, 7)
        assert np.array_equal(a.train, b.train)

    @given(st.integers(20, 300), st.integers(2, 10), st.integers(0, 10 ** 6), st.floats(0.1, 0.9))
    def test_kfold_partitions_and_stratifies(self, n, k, seed, rate):
        y = (np.random.default_rng(seed).random(n) < rate).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        folds = stratified_kfold(y, k, seed)
        held = np.concatenate([h for _, h in folds])
        assert np.array_equal(np.sort(held), np.arange(n))
        for fit, h in folds:
            assert np.intersect1d(fit, h).size == 0 and fit.size + h.size == n
        for c in (0, 1):
            per = [int((y[h] == c).sum()) for _, h in folds]
            assert max(per) - min(per) <= 1

    def test_table_is_read_only(self):
        t = small_table()
        with pytest.raises(ValueError):
            t.column("age")[0] = 1.0

    def test_take_and_drop(self):
        t = small_table()
        assert t.take([1, 2]).n_rows == 2
        assert "sex" not in t.drop(["sex"])
        assert isinstance(t.select(["age"]), Table)
