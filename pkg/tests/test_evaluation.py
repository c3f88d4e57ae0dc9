import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from losml.errors import SingleClass, TooFewRows, ZeroPredictors
from losml.evaluation import (
    auc,
    auc_ci,
    bootstrap_compare,
    calibration_curve,
    confusion_metrics,
    epv,
    evaluate_scores,
    repeated_stratified_cv,
    roc_points,
)
from losml.learners import fit_logistic


def pair_count_auc(s, y):
    s, y = np.asarray(s, float), np.asarray(y)
    pos, neg = s[y == 1], s[y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (pos.size * neg.size)


labelled = st.integers(2, 50).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


class TestAuc:
    def test_hand_example(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_perfect_order(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_chance_level(self, rng):
        assert auc(rng.random(20000), rng.integers(0, 2, 20000)) == pytest.approx(0.5, abs=0.02)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            auc([0.1, 0.2], [1, 1])

    @given(labelled)
    def test_pair_count_oracle_with_ties(self, data):
        s, y = data
        assert auc(s, y) == pair_count_auc(s, y)

    @given(labelled)
    def test_reflection_and_monotone_invariance(self, data):
        s, y = np.asarray(data[0]), data[1]
        assert auc(s, y) == pytest.approx(1 - auc(-s, y), abs=1e-12)
        assert auc(np.exp(3 * s), y) == auc(s, y)

    def test_matches_sklearn(self, rng):
        s, y = rng.random(500).round(2), rng.integers(0, 2, 500)
        assert auc(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-14)

    def test_roc_points_trapezoid_equals_auc(self, rng):
        s, y = rng.random(300).round(1), rng.integers(0, 2, 300)
        fpr, tpr, _ = roc_points(s, y)
        assert np.trapezoid(tpr, fpr) == pytest.approx(auc(s, y), abs=1e-12)


class TestConfusion:
    def test_hand_table(self):
        m = confusion_metrics([0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0])
        assert (m.accuracy, m.sensitivity, m.specificity, m.weighted_f1) == (0.5, 0.5, 0.5, 0.5)

    def test_constant_score(self):
        m = confusion_metrics([0.6] * 4, [0, 1, 0, 1])
        assert (m.sensitivity, m.specificity, m.accuracy) == (1.0, 0.0, 0.5)

    def test_perfect(self):
        m = confusion_metrics([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1])
        assert (m.accuracy, m.sensitivity, m.specificity, m.weighted_f1) == (1.0, 1.0, 1.0, 1.0)

    def test_threshold_is_inclusive(self):
        m = confusion_metrics([0.5, 0.49], [1, 0])
        assert m.accuracy == 1.0


class TestIntervals:
    def test_perfect_separation(self):
        lo, hi = auc_ci([0.1, 0.2, 0.3, 0.7, 0.8, 0.9] * 5, [0, 0, 0, 1, 1, 1] * 5, n_boot=200)
        assert (lo, hi) == (1.0, 1.0)

    def test_deterministic(self, rng):
        s, y = rng.random(100), rng.integers(0, 2, 100)
        assert auc_ci(s, y, 300, seed=4) == auc_ci(s, y, 300, seed=4)

    def test_random_scores_cover_half(self):
        hits = 0
        for seed in range(40):
            r = np.random.default_rng(seed)
            lo, hi = auc_ci(r.random(200), r.integers(0, 2, 200), n_boot=400, seed=seed)
            hits += lo <= 0.5 <= hi
        assert hits / 40 >= 0.9

    def test_report_interval_contains_estimate(self, rng):
        s, y = rng.random(80), rng.integers(0, 2, 80)
        r = evaluate_scores(s, y, n_boot=200)
        assert r.auc_ci_low <= r.auc <= r.auc_ci_high


class TestCompare:
    def test_identical_scores(self, rng):
        s, y = rng.random(100), rng.integers(0, 2, 100)
        r = bootstrap_compare(s, s, y, n_boot=200)
        assert r.p_one_sided == 0.5 and r.difference == 0.0

    def test_strong_vs_weak(self):
        small = 0
        for seed in range(10):
            r = np.random.default_rng(100 + seed)
            y = r.integers(0, 2, 1000)
            strong = y * 1.8 + r.normal(size=1000)   # AUC ~ 0.9
            weak = y * 0.36 + r.normal(size=1000)    # AUC ~ 0.6
            small += bootstrap_compare(strong, weak, y, n_boot=500, seed=seed).p_one_sided < 0.001
        assert small == 10


class TestCalibration:
    def test_constant_half(self):
        c = calibration_curve([0.5] * 10, [0, 1] * 5)
        assert c.mean_predicted.tolist() == [0.5] and c.observed.tolist() == [0.5]

    def test_two_bins(self):
        c = calibration_curve([0.05, 0.95, 0.05, 0.95], [0, 1, 1, 1])
        assert len(c.counts) == 2

    def test_calibrated_scorer(self, rng):
        s = rng.random(10000)
        y = (rng.random(10000) < s).astype(int)
        c = calibration_curve(s, y)
        assert c.counts.sum() == 10000
        assert np.max(np.abs(c.observed - c.mean_predicted)) < 0.05


class TestCrossValidation:
    def fit(self, X, y, seed):
        return fit_logistic(X, y)

    def test_structure(self, rng):
        X = rng.normal(size=(60, 2))
        y = (X[:, 0] + rng.normal(size=60) > 0).astype(int)
        assert len(repeated_stratified_cv(self.fit, X, y, k=2, repeats=1).rows) == 2

    def test_too_few_rows(self, rng):
        with pytest.raises(TooFewRows):
            repeated_stratified_cv(self.fit, rng.normal(size=(20, 2)), np.r_[[0, 1] * 10], k=5)

    def test_cv_tracks_held_out(self, rng):
        n = 10000
        X = rng.normal(size=(2 * n, 3))
        y = (rng.random(2 * n) < 1 / (1 + np.exp(-(X @ [1.0, -0.7, 0.3])))).astype(int)
        cv = repeated_stratified_cv(self.fit, X[:n], y[:n], k=5, repeats=2)
        held = auc(fit_logistic(X[:n], y[:n]).predict_proba(X[n:])[:, 1], y[n:])
        assert abs(cv.mean_auc - held) < 0.03


class TestEpv:
    def test_published_ratios(self):
        assert round(epv(10060, None, 58).paper_ratio, 3) == 173.448
        assert round(epv(1576, None, 75).paper_ratio, 3) == 21.013

    def test_boundary(self):
        r = epv(1000, 250, 25)
        assert r.events_ratio == 10.0 and r.adequate is True

    def test_zero_predictors(self):
        with pytest.raises(ZeroPredictors):
            epv(100, 10, 0)
