import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression

from losml.errors import DimensionMismatch, SingleClass
from losml.evaluation import auc
from losml.learners import (
    VARIANTS,
    GbtParams,
    GnbModel,
    fit_gbt,
    fit_gnb,
    fit_logistic,
    fit_random_forest,
    fit_tree,
    log_loss,
    model_from_dict,
    model_to_dict,
    penalized_loss,
)
from losml.learners.tree import PackedTrees


def separable(rng, n=400, p=2):
    X = rng.normal(size=(n, p))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return X, y


def xor_data():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = (X[:, 0] != X[:, 1]).astype(int)
    return X, y


class TestTree:
    def test_one_feature_separable_is_a_stump(self):
        X = np.arange(10.0)[:, None]
        y = (X[:, 0] > 4).astype(int)
        m = fit_tree(X, y, max_depth=3)
        assert m.tree.depth == 1
        assert np.all((m.predict_proba(X)[:, 1] >= 0.5) == y)

    def test_xor_depth_two(self):
        X, y = xor_data()
        m = fit_tree(X, y, max_depth=2)
        assert np.all((m.predict_proba(X)[:, 1] >= 0.5) == y)
        assert m.tree.n_leaves == 4

    def test_depth_zero_is_majority_fraction(self):
        X, y = xor_data()
        y[:5] = 1
        m = fit_tree(X, y, max_depth=0)
        assert m.tree.n_nodes == 1
        assert np.allclose(m.predict_proba(X)[:, 1], y.mean())

    def test_structure_invariants(self, rng):
        X, y = separable(rng, 300, 4)
        y[rng.random(300) < 0.2] ^= 1
        t = fit_tree(X, y, max_depth=5).tree
        leaf = t.feature < 0
        assert np.all(t.left[leaf] < 0) and np.all(t.right[leaf] < 0)
        assert np.all(t.left[~leaf] >= 0) and np.all(t.right[~leaf] >= 0)
        assert t.node_depths().max() <= 5

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            fit_tree(np.zeros((5, 1)), np.zeros(5))


class TestForest:
    def test_single_tree_reduction(self, rng):
        X, y = separable(rng, 200, 3)
        y[rng.random(200) < 0.15] ^= 1
        f = fit_random_forest(X, y, n_trees=1, bootstrap=False, feature_fraction=1.0, max_depth=4,
                              min_samples_leaf=1)
        t = fit_tree(X, y, max_depth=4, min_samples_leaf=1)
        assert np.allclose(f.predict_proba(X), t.predict_proba(X))

    def test_separable_held_out_accuracy(self, rng):
        X, y = separable(rng, 600)
        f = fit_random_forest(X[:400], y[:400], n_trees=50, seed=3)
        acc = np.mean((f.predict_proba(X[400:])[:, 1] >= 0.5) == y[400:])
        assert acc >= 0.95

    def test_same_seed_identical(self, rng):
        X, y = separable(rng, 200, 5)
        a = fit_random_forest(X, y, n_trees=10, seed=7).predict_proba(X)
        b = fit_random_forest(X, y, n_trees=10, seed=7).predict_proba(X)
        assert np.array_equal(a, b)

    def test_row_permutation_invariance(self, rng):
        X, y = separable(rng, 150, 3)
        y[rng.random(150) < 0.2] ^= 1
        perm = rng.permutation(150)
        a = fit_random_forest(X, y, n_trees=5, seed=1).predict_proba(X)
        b = fit_random_forest(X[perm], y[perm], n_trees=5, seed=1).predict_proba(X)
        assert np.array_equal(a, b)


class TestGbt:
    def test_zero_rounds_is_base_rate(self, rng):
        X, y = separable(rng, 100)
        m = fit_gbt(X, y, n_rounds=0)
        assert np.allclose(m.predict_proba(X)[:, 1], y.mean())

    def test_zero_learning_rate_matches_zero_rounds(self, rng):
        X, y = separable(rng, 100)
        a = fit_gbt(X, y, n_rounds=10, learning_rate=0.0).predict_proba(X)
        b = fit_gbt(X, y, n_rounds=0).predict_proba(X)
        assert np.allclose(a, b)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_separable_benchmark(self, variant, rng):
        X, y = separable(rng, 400)
        m = fit_gbt(X, y, variant, n_rounds=50, learning_rate=0.3, max_depth=3, max_leaves=8)
        p = m.predict_proba(X)[:, 1]
        assert log_loss(y, p) < 0.1
        assert auc(p, y) > 0.99
        assert np.all(np.diff(m.train_loss) <= 1e-12)

    def test_levelwise_and_leafwise_differ_in_shape(self, rng):
        X, y = separable(rng, 400, 4)
        y[rng.random(400) < 0.1] ^= 1
        lv = fit_gbt(X, y, "levelwise", n_rounds=5, max_depth=3)
        lf = fit_gbt(X, y, "leafwise", n_rounds=5, max_leaves=5)
        assert [t.n_leaves for t in lv.trees] != [t.n_leaves for t in lf.trees]

    def test_oblivious_one_split_per_level(self, rng):
        X, y = separable(rng, 300, 4)
        y[rng.random(300) < 0.2] ^= 1
        m = fit_gbt(X, y, "oblivious", n_rounds=5, max_depth=3)
        for t in m.trees:
            d = t.node_depths()
            inner = t.feature >= 0
            for level in np.unique(d[inner]):
                sel = inner & (d == level)
                assert len(set(zip(t.feature[sel].tolist(), t.threshold[sel].tolist()))) == 1

    def test_row_permutation_invariance(self, rng):
        X, y = separable(rng, 200, 3)
        y[rng.random(200) < 0.2] ^= 1
        perm = rng.permutation(200)
        for v in VARIANTS:
            a = fit_gbt(X, y, v, n_rounds=5).predict_proba(X)
            b = fit_gbt(X[perm], y[perm], v, n_rounds=5).predict_proba(X)
            assert np.array_equal(a, b)


class TestLogistic:
    def test_exact_independence_gives_zero_weights(self):
        # every feature value occurs equally often in both classes
        x = np.array([-2.0, -1.0, 0.5, 1.0, 3.0])
        X = np.column_stack([np.tile(x, 40), np.repeat(x, 40)])
        X = np.vstack([X, X])
        y = np.repeat([0, 1], 200)
        m = fit_logistic(X, y, l2_lambda=1.0)
        assert np.all(np.abs(m.weights) < 1e-4) and abs(m.intercept) < 1e-4

    def test_separation_flagged(self):
        y = np.array([0, 1] * 20)
        m = fit_logistic(y[:, None].astype(float), y, l2_lambda=0.0, max_iter=30)
        assert not m.converged
        assert m.n_iter == 30
        assert m.weights[0] > 5

    def test_duplicated_rows_identical(self, rng):
        X, y = separable(rng, 200, 3)
        y[rng.random(200) < 0.25] ^= 1
        a = fit_logistic(X, y, l2_lambda=0.01)
        b = fit_logistic(np.vstack([X, X]), np.concatenate([y, y]), l2_lambda=0.01)
        assert np.allclose(a.weights, b.weights, atol=1e-10)

    def test_matches_sklearn(self, rng):
        X = rng.normal(size=(500, 4))
        y = (rng.random(500) < 1 / (1 + np.exp(-(X @ [1.0, -0.5, 0.2, 0.0])))).astype(int)
        lam = 0.01
        m = fit_logistic(X, y, l2_lambda=lam, tol=1e-10)
        # mean loss + lam/2 |w|^2  <=>  C = 1 / (n * lam)
        ref = LogisticRegression(C=1 / (500 * lam), tol=1e-12, max_iter=10000).fit(X, y)
        assert m.converged
        assert np.allclose(m.weights, ref.coef_[0], atol=1e-6)
        assert m.intercept == pytest.approx(ref.intercept_[0], abs=1e-6)

    def test_gradient_at_optimum_and_finite_differences(self, rng):
        X, y = separable(rng, 300, 3)
        y[rng.random(300) < 0.3] ^= 1
        m = fit_logistic(X, y, l2_lambda=0.1)
        _, gw, gb = penalized_loss(m.weights, m.intercept, X, y, 0.1)
        assert m.converged and max(np.abs(gw).max(), abs(gb)) < m.params.tol
        w0 = rng.normal(size=3)
        _, gw0, _ = penalized_loss(w0, 0.3, X, y, 0.1)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (penalized_loss(w0 + e, 0.3, X, y, 0.1)[0] - penalized_loss(w0 - e, 0.3, X, y, 0.1)[0]) / (2 * h)
            assert fd == pytest.approx(gw0[j], rel=1e-5)

    def test_loss_history_non_increasing(self, rng):
        X, y = separable(rng, 200, 3)
        y[rng.random(200) < 0.3] ^= 1
        assert np.all(np.diff(fit_logistic(X, y).loss_history) <= 0)


class TestGnb:
    def hand(self):
        return GnbModel(np.array([0.5, 0.5]), np.array([[0.0], [2.0]]), np.array([[1.0], [1.0]]))

    def test_hand_posteriors(self):
        p = self.hand().predict_proba([[1.0], [2.0]])[:, 1]
        assert p[0] == pytest.approx(0.5, abs=1e-12)
        assert p[1] == pytest.approx(1 / (1 + np.exp(-2.0)), abs=1e-12)
        assert p[1] == pytest.approx(0.8808, abs=1e-4)

    def test_symmetric_means(self):
        X = np.array([[-1.5], [-0.5], [0.5], [1.5]])
        y = np.array([0, 0, 1, 1])
        assert fit_gnb(X, y).predict_proba([[0.0]])[0, 1] == pytest.approx(0.5)

    def test_uninformative_feature_returns_priors(self):
        X = np.tile([1.0, 2.0, 3.0, 4.0], 4)[:, None]
        y = np.array([0] * 12 + [1] * 4)
        p = fit_gnb(X, y).predict_proba(X)[:, 1]
        assert np.allclose(p, 0.25)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            self.hand().predict_proba(np.zeros((2, 3)))

    @settings(max_examples=25)
    @given(st.integers(0, 10 ** 6))
    def test_probabilities_valid(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 3)) * rng.uniform(0.01, 100, 3)
        y = np.r_[0, 1, rng.integers(0, 2, 28)]
        P = fit_gnb(X, y).predict_proba(rng.normal(size=(20, 3)) * 50)
        assert np.all((P >= 0) & (P <= 1))
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)


class TestPackingAndSerialization:
    def test_packed_matches_per_tree(self, rng):
        X, y = separable(rng, 300, 4)
        y[rng.random(300) < 0.2] ^= 1
        f = fit_random_forest(X, y, n_trees=8, max_depth=6, min_samples_leaf=1)
        V = PackedTrees(f.trees).leaf_values(X)
        for j, t in enumerate(f.trees):
            assert np.array_equal(V[:, j], t.predict(X))

    @pytest.mark.parametrize("kind", ["forest", "gbt", "logistic", "gnb"])
    def test_json_round_trip_is_exact(self, kind, rng):
        X, y = separable(rng, 200, 3)
        y[rng.random(200) < 0.2] ^= 1
        m = {
            "forest": lambda: fit_random_forest(X, y, n_trees=5),
            "gbt": lambda: fit_gbt(X, y, "oblivious", n_rounds=5),
            "logistic": lambda: fit_logistic(X, y),
            "gnb": lambda: fit_gnb(X, y),
        }[kind]()
        back = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        assert np.array_equal(back.predict_proba(X), m.predict_proba(X))
