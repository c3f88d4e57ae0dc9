"""Correlation measures, association tests and variance inflation factors.

p-values are computed natively: the chi-square tail through the regularized
upper incomplete gamma function and the normal tail through ``math.erfc``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConstantInput,
    DegenerateGroups,
    DegenerateTable,
    EmptyInput,
    LengthMismatch,
    SingleClass,
    TooFewRows,
    ZeroExpectedCount,
)

_EPS = 1e-16
_FPMIN = 1e-300


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: Optional[float] = None
    n: int = 0
    details: dict = field(default_factory=dict, compare=False)

    __test__ = False  # keep pytest from collecting this as a test class


# -- special functions -----------------------------------------------------


def _gamma_series(a, x):
    # lower regularized P(a, x) by its power series; converges for x < a + 1
    ap = a
    total = delta = 1.0 / a
    for _ in range(10000):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a, x):
    # upper regularized Q(a, x) by the modified Lentz continued fraction
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cont_frac(a, x))


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of the chi-square distribution."""
    if df <= 0:
        return 1.0
    return gammaincc(df / 2.0, x / 2.0)


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# -- ranks and correlations ------------------------------------------------


def average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of the ranks they cover."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise EmptyInput("cannot rank an empty array")
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    # boundaries of tie blocks in sorted order
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    ends = np.r_[starts[1:], n]
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(block_rank, ends - starts)
    return ranks


def _tie_sizes(values):
    _, counts = np.unique(values, return_counts=True)
    return counts


def _paired(x, y, min_len=3):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < min_len:
        raise EmptyInput(f"need at least {min_len} paired values")
    return x, y


def pearson(x, y) -> float:
    x, y = _paired(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation undefined for a constant input")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    x, y = _paired(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def point_biserial(binary, cont) -> float:
    b = np.asarray(binary, dtype=np.float64).ravel()
    if not np.isin(b, (0.0, 1.0)).all():
        raise ValueError("binary input must be coded 0/1")
    if b.size and b.min() == b.max():
        raise SingleClass("binary input has a single class")
    return pearson(b, cont)


def rank_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.column_stack([average_ranks(X[:, j]) for j in range(X.shape[1])]) if X.shape[1] else X


def correlation_matrix(X) -> np.ndarray:
    """Pearson correlations between columns; constant columns give NaN rows."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = Xc / norms
        R = Z.T @ Z
    R[:, norms == 0] = np.nan
    R[norms == 0, :] = np.nan
    return np.clip(R, -1.0, 1.0)


def spearman_matrix(X) -> np.ndarray:
    return correlation_matrix(rank_matrix(X))


# -- categorical associations ----------------------------------------------


def contingency(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.float64)
    np.add.at(table, (ia, ib), 1.0)
    return table


def _chi2_statistic(table):
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    return float(((table - expected) ** 2 / expected).sum()), expected


def cramers_v(a, b) -> float:
    table = contingency(a, b)
    r, c = table.shape
    if r < 2 or c < 2:
        raise DegenerateTable("each variable needs at least two observed levels")
    chi2, _ = _chi2_statistic(table)
    v = math.sqrt(chi2 / (table.sum() * min(r - 1, c - 1)))
    return min(1.0, v)


def correlation_ratio(groups, values) -> float:
    g = np.asarray(groups).ravel()
    v = np.asarray(values, dtype=np.float64).ravel()
    if g.size != v.size:
        raise LengthMismatch(f"lengths differ: {g.size} vs {v.size}")
    levels, inv = np.unique(g, return_inverse=True)
    if levels.size < 2:
        raise DegenerateGroups("need at least two groups")
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=v)
    mean = v.mean()
    ss_total = float(((v - mean) ** 2).sum())
    if ss_total == 0.0:
        raise ConstantInput("values are all equal")
    ss_between = float((counts * (sums / counts - mean) ** 2).sum())
    return min(1.0, math.sqrt(ss_between / ss_total))


# -- tests -----------------------------------------------------------------


def chi_square_test(table) -> TestResult:
    """Pearson chi-square test of independence, no continuity correction."""
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or t.size == 0:
        raise EmptyInput("contingency table must be a non-empty 2-d array")
    n = t.sum()
    if n <= 0:
        raise ZeroExpectedCount("table has no observations")
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    if (expected <= 0).any():
        raise ZeroExpectedCount("an expected count is zero")
    stat = float(((t - expected) ** 2 / expected).sum())
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    return TestResult(stat, chi2_sf(stat, df), float(df), int(n))


def mann_whitney_u(a, b) -> TestResult:
    """Two-sided Mann-Whitney U test by the normal approximation.

    Uses the tie-corrected variance and a 0.5 continuity correction.
    The reported statistic is min(U_a, U_b); both are kept in ``details``.
    Approximate for small samples (n < 8).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise EmptyInput("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    u_a = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    u_b = na * nb - u_a
    n = na + nb
    mu = na * nb / 2.0
    ties = _tie_sizes(pooled).astype(np.float64)
    tie_term = float((ties ** 3 - ties).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        p = 1.0
    else:
        z = (abs(u_a - mu) - 0.5) / math.sqrt(var)
        p = 1.0 if z <= 0 else min(1.0, 2.0 * norm_sf(z))
    return TestResult(min(u_a, u_b), p, None, n, {"u_a": u_a, "u_b": u_b})


# -- variance inflation ----------------------------------------------------


def vif_all(X, r2_tol: float = 1e-12) -> np.ndarray:
    """Variance inflation factor of every column of ``X``.

    Each column is regressed (with intercept) on all the others. The
    regressions run on the triangular factor of the centred design, which
    preserves all inner products, through an SVD-based least-squares solve.
    A column whose R^2 reaches 1 - ``r2_tol`` gets +inf.
    """
    M = np.asarray(getattr(X, "X", X), dtype=np.float64)
    n, p = M.shape
    if n <= p:
        raise TooFewRows(f"VIF needs more rows than features ({n} <= {p})")
    Xc = M - M.mean(axis=0)
    R = np.linalg.qr(Xc, mode="r")
    out = np.empty(p)
    for j in range(p):
        target = R[:, j]
        sst = float(target @ target)
        if sst <= 1e-300:
            out[j] = np.inf
            continue
        if p == 1:
            out[j] = 1.0
            continue
        others = np.delete(R, j, axis=1)
        beta, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ beta
        r2 = 1.0 - float(resid @ resid) / sst
        out[j] = np.inf if r2 >= 1.0 - r2_tol else 1.0 / (1.0 - r2)
    return out
