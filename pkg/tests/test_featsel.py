import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_table
from losml.data import EncodedMatrix, stratified_split
from losml.errors import EmptyDomain, TooFewRows
from losml.featsel import (
    benchmark_csv,
    benchmark_selection,
    build_variable_sets,
    run_selection,
    select_hybrid,
    select_spearman,
    select_univariate,
    select_vif,
)
from losml.stats import spearman_matrix, vif_all
from losml.synth import SynthColumn, SynthSpec, generate


def enc(X, names=None):
    X = np.asarray(X, dtype=float)
    names = names or [f"f{j}" for j in range(X.shape[1])]
    return EncodedMatrix(list(names), {n: n for n in names}, X)


def partition_ok(rep, inputs):
    dropped = [d.feature for d in rep.dropped]
    return sorted(rep.kept + dropped) == sorted(inputs) and not set(rep.kept) & set(dropped)


def domain_table(sizes, n=30, seed=0):
    r = np.random.default_rng(seed)
    cols, vals = [], []
    for dom, k in zip(("patient", "clinical", "system"), sizes):
        for i in range(k):
            cols.append((f"{dom[0]}{i}", dom, "continuous", None))
            vals.append(r.normal(size=n).tolist())
    return make_table(cols, vals)


class TestVariableSets:
    @pytest.mark.parametrize("sizes,total", [((7, 25, 57), 89), ((7, 20, 56), 83)])
    def test_all_set_size(self, sizes, total):
        sets = build_variable_sets(domain_table(sizes))
        assert len(sets["all"].columns) == total
        assert len(sets) == 8

    def test_single_domain(self):
        sets = build_variable_sets(domain_table((7, 2, 3)))
        assert len(sets["patient"].columns) == 7
        assert len(sets["clinical+system"].columns) == 5

    def test_empty_domain(self):
        with pytest.raises(EmptyDomain):
            build_variable_sets(domain_table((2, 0, 3)))


class TestVif:
    def test_orthogonal_kept(self, rng):
        Q, _ = np.linalg.qr(rng.normal(size=(50, 3)))
        assert select_vif(enc(Q)).kept == ["f0", "f1", "f2"]

    def test_duplicate_pair_drops_exactly_one(self, rng):
        x = rng.normal(size=100)
        rep = select_vif(enc(np.column_stack([x, rng.normal(size=100), x]), ["a", "b", "c"]))
        assert [d.feature for d in rep.dropped] == ["a"]  # tie on +inf -> first name
        assert rep.kept == ["b", "c"]

    def test_sum_feature_dropped_first(self, rng):
        f1, f2 = rng.normal(size=(2, 300))
        X = np.column_stack([f1, f2, f1 + f2 + 0.05 * rng.normal(size=300)])
        v = vif_all(X)
        rep = select_vif(enc(X))
        assert rep.dropped[0].feature == f"f{int(np.argmax(v))}"
        assert len(rep.kept) == 2

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            select_vif(enc(np.eye(3)))

    @settings(max_examples=20)
    @given(st.integers(0, 10 ** 6))
    def test_postcondition(self, seed):
        r = np.random.default_rng(seed)
        Z = r.normal(size=(80, 4))
        X = np.column_stack([Z, Z[:, :2] @ r.normal(size=(2, 3)) + 0.3 * r.normal(size=(80, 3))])
        rep = select_vif(enc(X))
        assert partition_ok(rep, [f"f{j}" for j in range(7)])
        idx = [int(n[1:]) for n in rep.kept]
        assert len(idx) < 2 or vif_all(X[:, idx]).max() <= 5.0
        assert rep.kept == select_vif(enc(X)).kept


class TestSpearman:
    def test_identical_pair_drops_weaker(self, rng):
        y = rng.integers(0, 2, 200)
        x = y + rng.normal(size=200)
        noise = rng.normal(size=200)
        X = np.column_stack([noise, x, noise])
        rep = select_spearman(enc(X, ["n1", "sig", "n2"]), y)
        assert "sig" in rep.kept and len(rep.kept) == 2

    def test_low_correlation_all_kept(self, rng):
        X = rng.normal(size=(300, 4))
        assert select_spearman(enc(X), rng.integers(0, 2, 300)).kept == ["f0", "f1", "f2", "f3"]

    def test_clone_cluster_single_survivor(self, rng):
        s = rng.normal(size=500)
        X = np.column_stack([s + 0.1 * rng.normal(size=500) for _ in range(3)] + [rng.normal(size=500)])
        rep = select_spearman(enc(X), rng.integers(0, 2, 500))
        assert len([k for k in rep.kept if k != "f3"]) == 1 and "f3" in rep.kept

    @settings(max_examples=20)
    @given(st.integers(0, 10 ** 6))
    def test_postcondition(self, seed):
        r = np.random.default_rng(seed)
        Z = r.normal(size=(100, 3))
        X = np.column_stack([Z, Z + r.uniform(0.1, 1.0) * r.normal(size=(100, 3))])
        y = r.integers(0, 2, 100)
        rep = select_spearman(enc(X), y)
        assert partition_ok(rep, [f"f{j}" for j in range(6)])
        idx = [int(n[1:]) for n in rep.kept]
        R = spearman_matrix(X[:, idx])
        assert np.all(np.abs(R[np.triu_indices(len(idx), 1)]) <= 0.7)


class TestUnivariate:
    def test_outcome_copy_kept(self, rng):
        y = rng.integers(0, 2, 300)
        t = make_table([("a", "patient", "continuous", None), ("b", "clinical", "categorical", ["No", "Yes"])],
                       [y + 0.01 * rng.random(300), [["No", "Yes"][v] for v in y]])
        rep = select_univariate(t, y)
        assert rep.kept == ["a", "b"]

    def test_noise_false_positive_rate(self):
        kept = 0
        for seed in range(200):
            r = np.random.default_rng(seed)
            t = make_table([("z", "system", "continuous", None)], [r.normal(size=2000)])
            kept += bool(select_univariate(t, r.integers(0, 2, 2000)).kept)
        assert 0.02 <= kept / 200 <= 0.09

    def test_degenerate_routed(self, rng):
        t = make_table([("k", "system", "continuous", None)], [[1.0] * 50])
        rep = select_univariate(t, rng.integers(0, 2, 50))
        assert rep.dropped[0].reason == "degenerate"

    def test_planted_signals_kept(self):
        cols = [SynthColumn(f"s{i}", "clinical", coef=0.3) for i in range(4)]
        cols += [SynthColumn("sc", "patient", "categorical", ("No", "Yes"), coef=0.4)]
        cols += [SynthColumn(f"n{i}", "system") for i in range(5)]
        spec = SynthSpec("plant", 5000, cols)
        for seed in range(5):
            table, truth = generate(spec, seed)
            los = table.column("los_days")
            y = (los > np.percentile(los, 75)).astype(int)
            rep = select_univariate(table, y)
            assert set(truth.signal_columns) <= set(rep.kept)


class TestHybrid:
    def test_categorical_pair_v_one(self, rng):
        a = rng.integers(0, 3, 200)
        labs = ["x", "y", "z"]
        t = make_table([("a", "clinical", "categorical", labs), ("b", "clinical", "categorical", labs)],
                       [[labs[v] for v in a], [labs[v] for v in a]])
        rep = select_hybrid(t, rng.integers(0, 2, 200))
        assert len(rep.kept) == 1 and rep.dropped[0].reason == "cramers_v"

    def test_binned_copy_drops_continuous(self, rng):
        x = rng.normal(size=400)
        t = make_table([("x", "clinical", "continuous", None), ("xb", "clinical", "categorical", ["lo", "hi"])],
                       [x, ["hi" if v > 0 else "lo" for v in x]])
        rep = select_hybrid(t, rng.integers(0, 2, 400))
        assert rep.kept == ["xb"]
        assert rep.dropped[0].reason == "point_biserial" and rep.dropped[0].statistic > 0.3

    def test_independent_all_kept(self, rng):
        t = make_table([("x", "clinical", "continuous", None), ("w", "system", "continuous", None),
                        ("c", "patient", "categorical", ["p", "q", "r"])],
                       [rng.normal(size=400), rng.normal(size=400), [["p", "q", "r"][v] for v in rng.integers(0, 3, 400)]])
        assert select_hybrid(t, rng.integers(0, 2, 400)).kept == ["x", "w", "c"]


class TestBenchmark:
    def table(self, rng, n=600):
        cols, vals = [], []
        y = rng.integers(0, 2, n)
        for i in range(12):
            cols.append((f"v{i}", "clinical", "continuous", None))
            vals.append((y * (0.8 if i < 3 else 0.0) + rng.normal(size=n)).tolist())
        return make_table(cols, vals), y

    def test_rows_and_csv(self, rng):
        t, y = self.table(rng)
        split = stratified_split(y, 0.8, 0)
        rows = benchmark_selection(t, y, ["vif", "spearman", "univariate", "hybrid"], split)
        assert [r.method for r in rows] == ["baseline", "vif", "spearman", "univariate", "hybrid"]
        assert rows[0].time_difference_pct is None
        text = benchmark_csv(rows)
        assert text.splitlines()[1].split(",")[4] == "N.A."
        assert rows[3].n_predictors < 12

    def test_deterministic_reports(self, rng):
        t, y = self.table(rng)
        for m in ("vif", "spearman", "univariate", "hybrid"):
            a, b = run_selection(m, t, y), run_selection(m, t, y)
            assert a.to_dict(False) == b.to_dict(False)
            assert partition_ok(a, a.input_features)
