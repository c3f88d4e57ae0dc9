"""Discrimination and calibration metrics, resampling procedures and EPV.

AUC is the Mann-Whitney probability that a random positive outscores a
random negative, ties counting one half. Bootstrap routines evaluate AUC on
weighted copies of the original rows (a resample is a vector of row counts),
which gives the same value as materializing the resample.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np

from .data import stratified_kfold
from .errors import DegenerateResample, EmptyInput, LengthMismatch, SingleClass, TooFewRows, ZeroPredictors
from .stats import average_ranks, norm_sf


def _scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.size != y.size:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    if s.size == 0:
        raise EmptyInput("no scores")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be coded 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise SingleClass("labels contain a single class")
    return s, y


# -- AUC -------------------------------------------------------------------


def auc(scores, labels) -> float:
    """Area under the ROC curve by the rank-sum identity."""
    s, y = _scores_labels(scores, labels)
    n1 = int(y.sum())
    n0 = y.size - n1
    r = average_ranks(s)
    u = float(r[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


class _TieGroups:
    """Rows grouped by equal score, groups in ascending score order."""

    def __init__(self, s):
        order = np.argsort(s, kind="mergesort")
        ss = s[order]
        starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
        self.order = order
        self.starts = starts

    def group_sums(self, W):
        # W: (B, n) per-row weights -> (B, G) per-group totals
        return np.add.reduceat(W[:, self.order], self.starts, axis=1)


def _weighted_auc(groups: _TieGroups, W, pos):
    """AUC for each row of the weight matrix ``W`` (rows are resamples)."""
    Wp = W * pos
    Wn = W - Wp
    P = groups.group_sums(Wp)
    N = groups.group_sums(Wn)
    below = np.cumsum(N, axis=1) - N
    num = np.sum(P * (below + 0.5 * N), axis=1)
    return num / (P.sum(axis=1) * N.sum(axis=1))


def _replicate_rngs(seed, n):
    return [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(n)]


# -- confusion-matrix metrics ----------------------------------------------


@dataclass
class ConfusionMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    weighted_f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5


def _f1(tp, fp, fn):
    d = 2 * tp + fp + fn
    return 0.0 if d == 0 else 2.0 * tp / d


def confusion_metrics(scores, labels, threshold: float = 0.5) -> ConfusionMetrics:
    """Metrics of the rule "positive iff score >= threshold".

    Weighted F1 averages the per-class F1 scores weighted by class support.
    """
    s, y = _scores_labels(scores, labels)
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    n = y.size
    n1 = tp + fn
    n0 = tn + fp
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)
    wf1 = (n1 * f1_pos + n0 * f1_neg) / n
    return ConfusionMetrics((tp + tn) / n, tp / n1, tn / n0, wf1, tp, fp, tn, fn, threshold)


# -- confidence interval and comparison ----------------------------------


def auc_ci(scores, labels, n_boot: int = 2000, level: float = 0.95, seed: int = 0):
    """Stratified bootstrap percentile interval for the AUC.

    Positives and negatives are resampled separately with replacement, so
    every replicate has both classes. Replicate ``b`` uses its own generator
    spawned from ``seed``.
    """
    s, y = _scores_labels(scores, labels)
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    pos_idx = np.flatnonzero(y == 1)
    neg_idx = np.flatnonzero(y == 0)
    groups = _TieGroups(s)
    n = s.size
    pos = (y == 1).astype(np.float64)
    out = np.empty(n_boot)
    rngs = _replicate_rngs(seed, n_boot)
    chunk = max(1, min(n_boot, 2_000_000 // max(n, 1)))
    for start in range(0, n_boot, chunk):
        stop = min(n_boot, start + chunk)
        W = np.zeros((stop - start, n))
        for b in range(start, stop):
            rng = rngs[b]
            draw = np.concatenate([rng.choice(pos_idx, pos_idx.size), rng.choice(neg_idx, neg_idx.size)])
            W[b - start] = np.bincount(draw, minlength=n)
        out[start:stop] = _weighted_auc(groups, W, pos)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(out, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


@dataclass
class ComparisonResult:
    auc_a: float
    auc_b: float
    difference: float
    sd: float
    z: float
    p_one_sided: float
    n_boot: int
    seed: int
    n_redrawn: int = 0

    def to_dict(self):
        return {k: (repr(float(v)) if isinstance(v, float) else v) for k, v in asdict(self).items()}


def bootstrap_compare(scores_a, scores_b, labels, n_boot: int = 5000, seed: int = 0,
                      max_redraws: int = 1000) -> ComparisonResult:
    """One-sided bootstrap test that model ``a`` has the larger AUC.

    Each replicate resamples rows with replacement at the original size and
    records ``AUC_a - AUC_b``; replicates with a single class are redrawn.
    ``Z`` is the full-sample difference over the standard deviation of the
    replicate differences and ``p = 1 - Phi(Z)``. With zero spread, ``p`` is
    0.5 for a zero difference and 0 or 1 by its sign otherwise.
    """
    sa, y = _scores_labels(scores_a, labels)
    sb, _ = _scores_labels(scores_b, labels)
    if sa.size != sb.size:
        raise LengthMismatch("both models must score the same rows")
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    n = y.size
    pos = (y == 1).astype(np.float64)
    ga, gb = _TieGroups(sa), _TieGroups(sb)
    auc_a, auc_b = auc(sa, y), auc(sb, y)
    diffs = np.empty(n_boot)
    rngs = _replicate_rngs(seed, n_boot)
    redrawn = 0
    chunk = max(1, min(n_boot, 2_000_000 // max(n, 1)))
    for start in range(0, n_boot, chunk):
        stop = min(n_boot, start + chunk)
        W = np.zeros((stop - start, n))
        for b in range(start, stop):
            rng = rngs[b]
            for attempt in range(max_redraws + 1):
                counts = np.bincount(rng.integers(0, n, n), minlength=n)
                n_pos = int(counts @ y)
                if 0 < n_pos < n:
                    break
                redrawn += 1
            else:
                raise DegenerateResample(f"replicate {b} kept collapsing to one class", replicate=b)
            W[b - start] = counts
        diffs[start:stop] = _weighted_auc(ga, W, pos) - _weighted_auc(gb, W, pos)
    diff = auc_a - auc_b
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0 or not np.isfinite(sd):
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        p = 0.5 if diff == 0 else (0.0 if diff > 0 else 1.0)
    else:
        z = diff / sd
        p = norm_sf(z)
    return ComparisonResult(auc_a, auc_b, diff, sd, float(z), float(p), n_boot, seed, redrawn)


# -- metrics report --------------------------------------------------------


@dataclass
class MetricsReport:
    auc: float
    auc_ci_low: float
    auc_ci_high: float
    accuracy: float
    sensitivity: float
    specificity: float
    weighted_f1: float
    n: int
    n_events: int
    threshold: float = 0.5

    def to_dict(self):
        return asdict(self)


def evaluate_scores(scores, labels, threshold: float = 0.5, n_boot: int = 2000, seed: int = 0,
                    level: float = 0.95) -> MetricsReport:
    """AUC with bootstrap interval plus thresholded metrics.

    The interval is widened to contain the point estimate when the
    percentile bounds fall on one side of it.
    """
    s, y = _scores_labels(scores, labels)
    a = auc(s, y)
    lo, hi = auc_ci(s, y, n_boot, level, seed)
    cm = confusion_metrics(s, y, threshold)
    return MetricsReport(a, min(lo, a), max(hi, a), cm.accuracy, cm.sensitivity, cm.specificity,
                         cm.weighted_f1, int(y.size), int(y.sum()), threshold)


# -- ROC and calibration ---------------------------------------------------


def roc_points(scores, labels):
    """ROC vertices ``(fpr, tpr, threshold)``, from (0, 0) to (1, 1)."""
    s, y = _scores_labels(scores, labels)
    thr = np.unique(s)[::-1]
    n1 = y.sum()
    n0 = y.size - n1
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    ends = np.r_[np.flatnonzero(ss[1:] != ss[:-1]), ss.size - 1]
    tps = np.cumsum(yy)[ends]
    fps = (ends + 1) - tps
    fpr = np.r_[0.0, fps / n0]
    tpr = np.r_[0.0, tps / n1]
    return fpr, tpr, np.r_[np.inf, thr]


@dataclass
class CalibrationCurve:
    bin_edges: np.ndarray
    mean_predicted: np.ndarray
    observed: np.ndarray
    counts: np.ndarray
    bins: np.ndarray  # index of each reported (non-empty) bin

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "lower", "upper", "mean_predicted", "observed", "count"])
        for k, b in enumerate(self.bins):
            w.writerow([int(b), repr(float(self.bin_edges[b])), repr(float(self.bin_edges[b + 1])),
                        repr(float(self.mean_predicted[k])), repr(float(self.observed[k])), int(self.counts[k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def calibration_curve(scores, labels, n_bins: int = 10) -> CalibrationCurve:
    """Equal-width reliability bins on [0, 1]; empty bins are omitted.

    Bins are left-closed, with the last bin also containing 1.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.size != y.size:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    if s.size and (s.min() < 0 or s.max() > 1 or not np.isfinite(s).all()):
        raise ValueError("scores must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    ssum = np.bincount(idx, weights=s, minlength=n_bins)
    ysum = np.bincount(idx, weights=y, minlength=n_bins)
    nz = np.flatnonzero(counts)
    return CalibrationCurve(edges, ssum[nz] / counts[nz], ysum[nz] / counts[nz], counts[nz], nz)


# -- cross-validation ------------------------------------------------------


@dataclass
class CVResult:
    rows: List[dict]
    mean_auc: float
    sd_auc: float
    k: int
    repeats: int
    seed: int

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["repeat", "fold", "n_fit", "n_held", "held_positive_rate", "auc"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["repeat"], r["fold"], r["n_fit"], r["n_held"],
                        repr(float(r["held_positive_rate"])), repr(float(r["auc"]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def repeated_stratified_cv(fit: Callable, X, y, k: int = 5, repeats: int = 5, seed: int = 0) -> CVResult:
    """Repeated stratified k-fold AUC of ``fit(X, y, seed) -> model``.

    The model must offer ``predict_proba``. Repeat ``r`` partitions with a
    seed spawned from ``seed``; each fit also receives a spawned seed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel().astype(np.int64)
    if y.size < 10 * k:
        raise TooFewRows(f"need at least {10 * k} rows for {k}-fold CV, got {y.size}")
    root = np.random.SeedSequence(seed)
    rows = []
    for r, ss in enumerate(root.spawn(repeats)):
        part_seed, fit_seq = ss.spawn(2)
        folds = stratified_kfold(y, k, int(part_seed.generate_state(1)[0]))
        fit_seeds = [int(s.generate_state(1)[0]) for s in fit_seq.spawn(k)]
        for f, (tr, te) in enumerate(folds):
            model = fit(X[tr], y[tr], fit_seeds[f])
            p = model.predict_proba(X[te])[:, 1]
            rows.append({"repeat": r, "fold": f, "n_fit": int(tr.size), "n_held": int(te.size),
                         "held_positive_rate": float(y[te].mean()), "auc": auc(p, y[te])})
    aucs = np.array([r["auc"] for r in rows])
    sd = float(aucs.std(ddof=1)) if aucs.size > 1 else 0.0
    return CVResult(rows, float(aucs.mean()), sd, k, repeats, seed)


# -- sample-size adequacy --------------------------------------------------


@dataclass
class EpvResult:
    paper_ratio: float
    events_ratio: Optional[float]
    adequate: Optional[bool]


def epv(n_train_rows: int, n_events_train: Optional[int], n_predictors: int) -> EpvResult:
    """Rows per predictor and events per predictor (adequate at >= 10)."""
    if n_predictors <= 0:
        raise ZeroPredictors("EPV needs at least one predictor")
    if n_train_rows <= 0:
        raise ValueError("n_train_rows must be positive")
    paper = n_train_rows / n_predictors
    if n_events_train is None:
        return EpvResult(paper, None, None)
    er = n_events_train / n_predictors
    return EpvResult(paper, er, bool(er >= 10))
