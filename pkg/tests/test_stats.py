import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from statsmodels.stats.outliers_influence import variance_inflation_factor

from losml.errors import ConstantInput, DegenerateTable, SingleClass, ZeroExpectedCount
from losml.stats import (
    average_ranks,
    chi2_sf,
    chi_square_test,
    contingency,
    correlation_ratio,
    cramers_v,
    gammaincc,
    mann_whitney_u,
    norm_sf,
    pearson,
    point_biserial,
    spearman,
    spearman_matrix,
    vif_all,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestSpecialFunctions:
    @pytest.mark.parametrize("x,df", [(0.1, 1), (3.84, 1), (20.0, 1), (5.0, 4), (50.0, 30), (200.0, 150), (1e-6, 2)])
    def test_chi2_tail_matches_scipy(self, x, df):
        assert chi2_sf(x, df) == pytest.approx(ss.chi2.sf(x, df), rel=1e-10, abs=1e-300)

    @pytest.mark.parametrize("z", [-5.0, -1.0, 0.0, 0.5, 1.96, 4.0, 8.0])
    def test_normal_tail_matches_scipy(self, z):
        assert norm_sf(z) == pytest.approx(ss.norm.sf(z), rel=1e-12)

    @given(st.floats(0.05, 60), st.floats(0.0, 120))
    def test_incomplete_gamma_matches_scipy(self, a, x):
        from scipy.special import gammaincc as ref

        assert gammaincc(a, x) == pytest.approx(ref(a, x), rel=1e-9, abs=1e-14)


class TestRanksAndCorrelation:
    def test_ties_share_mean_rank(self):
        assert average_ranks([5, 5, 7]).tolist() == [1.5, 1.5, 3.0]

    def test_spearman_hand_value(self):
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_point_biserial_hand_value(self):
        # Sxy = 1, Sxx = 1, Syy = 2 -> 1/sqrt(2)
        assert point_biserial([0, 0, 1, 1], [1, 2, 2, 3]) == pytest.approx(0.70710678, abs=1e-8)

    def test_point_biserial_needs_two_classes(self):
        with pytest.raises(SingleClass):
            point_biserial([1, 1, 1], [1, 2, 3])

    def test_constant_input(self):
        with pytest.raises(ConstantInput):
            pearson([1, 1, 1], [1, 2, 3])

    @given(hnp.arrays(np.float64, st.integers(3, 40), elements=finite), st.integers(0, 10 ** 6))
    def test_rank_oracle(self, x, seed):
        y = np.random.default_rng(seed).normal(size=x.size)
        if np.ptp(x) < 1e-6:  # (near-)constant inputs are rejected by design
            return
        assert np.allclose(average_ranks(x), ss.rankdata(x))
        assert spearman(x, y) == pytest.approx(ss.spearmanr(x, y).statistic, abs=1e-10)
        assert pearson(x, y) == pytest.approx(ss.pearsonr(x, y).statistic, abs=1e-10)

    def test_spearman_matrix_matches_pairwise(self, rng):
        X = rng.normal(size=(50, 4))
        X[:, 3] = np.round(X[:, 0])
        R = spearman_matrix(X)
        for i in range(4):
            for j in range(4):
                assert R[i, j] == pytest.approx(ss.spearmanr(X[:, i], X[:, j]).statistic, abs=1e-12)


class TestAssociations:
    def test_cramers_v_hand_value(self):
        a = [0] * 30 + [0] * 10 + [1] * 10 + [1] * 30
        b = [0] * 30 + [1] * 10 + [0] * 10 + [1] * 30
        assert cramers_v(a, b) == pytest.approx(0.5)

    def test_cramers_v_matches_scipy(self, rng):
        a, b = rng.integers(0, 4, 300), rng.integers(0, 3, 300)
        ref = ss.contingency.association(np.asarray(contingency(a, b)).astype(np.int64), method="cramer", correction=False)
        assert cramers_v(a, b) == pytest.approx(ref, rel=1e-12)

    def test_cramers_v_degenerate(self):
        with pytest.raises(DegenerateTable):
            cramers_v([1, 1, 1], [0, 1, 0])

    def test_correlation_ratio_hand_value(self):
        # SS_between = 13.5, SS_total = 17.5
        g = ["A"] * 3 + ["B"] * 3
        assert correlation_ratio(g, [1, 2, 3, 4, 5, 6]) == pytest.approx(np.sqrt(13.5 / 17.5), abs=1e-12)
        assert correlation_ratio(g, [1, 2, 3, 4, 5, 6]) == pytest.approx(0.8783, abs=1e-4)

    def test_correlation_ratio_equals_abs_point_biserial_for_two_groups(self, rng):
        g = rng.integers(0, 2, 200)
        v = rng.normal(size=200) + g
        assert correlation_ratio(g, v) == pytest.approx(abs(point_biserial(g, v)), rel=1e-12)


class TestHypothesisTests:
    def test_chi_square_hand_value(self):
        r = chi_square_test([[30, 10], [10, 30]])
        assert r.statistic == pytest.approx(20.0)
        assert r.df == 1
        assert r.p_value == pytest.approx(7.744e-6, rel=1e-3)

    def test_chi_square_matches_scipy(self, rng):
        t = rng.integers(5, 60, size=(3, 4))
        ref = ss.chi2_contingency(t, correction=False)
        r = chi_square_test(t)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_chi_square_zero_expected(self):
        with pytest.raises(ZeroExpectedCount):
            chi_square_test([[0, 0], [3, 4]])

    def test_mann_whitney_pair_count(self):
        r = mann_whitney_u([1, 4, 5], [2, 3, 6])
        assert r.details["u_a"] == 4

    @given(st.lists(st.integers(0, 8), min_size=3, max_size=40), st.lists(st.integers(0, 8), min_size=3, max_size=40))
    def test_mann_whitney_matches_scipy_with_ties(self, a, b):
        if np.ptp(a + b) == 0:
            return
        ref = ss.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        r = mann_whitney_u(a, b)
        assert r.details["u_a"] == pytest.approx(ref.statistic)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


class TestVif:
    @pytest.mark.parametrize("r", [0.5, 0.9, 0.95])
    def test_two_feature_closed_form(self, r, rng):
        z = rng.normal(size=(500, 2))
        x1 = z[:, 0]
        x2 = r * x1 + np.sqrt(1 - r * r) * z[:, 1]
        rs = np.corrcoef(x1, x2)[0, 1]
        v = vif_all(np.column_stack([x1, x2]))
        assert np.allclose(v, 1 / (1 - rs ** 2), atol=1e-6)

    def test_matches_statsmodels(self, rng):
        X = rng.normal(size=(200, 5))
        X[:, 4] = X[:, 0] + X[:, 1] + 0.3 * rng.normal(size=200)
        A = np.column_stack([np.ones(200), X])
        ref = [variance_inflation_factor(A, j) for j in range(1, 6)]
        assert np.allclose(vif_all(X), ref, rtol=1e-8)

    def test_duplicate_column_is_infinite(self, rng):
        x = rng.normal(size=100)
        v = vif_all(np.column_stack([x, x, rng.normal(size=100)]))
        assert np.isinf(v[0]) and np.isinf(v[1]) and np.isfinite(v[2])
