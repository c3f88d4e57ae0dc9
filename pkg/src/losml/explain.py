"""Shapley-value attributions with an interventional value function.

For a coalition ``S`` the value of a row ``x`` is the mean model output over
background rows ``b`` of the composite row that takes ``x`` on ``S`` and
``b`` elsewhere. ``shap_exact`` sums the Shapley weights over all
coalitions; ``shap_permutation`` averages marginal contributions over random
feature orderings, evaluating every distinct coalition only once.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBackground, EmptyMatrix, TooManyFeatures

MAX_EXACT_FEATURES = 15
_BATCH_ROWS = 400_000  # composite rows evaluated per model call


def _check(x, background):
    x = np.asarray(x, dtype=np.float64).ravel()
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise EmptyBackground("background set is empty")
    if bg.shape[1] != x.size:
        raise DimensionMismatch(f"row has {x.size} features, background has {bg.shape[1]}")
    return x, bg


def coalition_values(predict: Callable, x, background, masks) -> np.ndarray:
    """Interventional value of each boolean coalition row in ``masks``."""
    x, bg = _check(x, background)
    masks = np.asarray(masks, dtype=bool)
    B = bg.shape[0]
    out = np.empty(masks.shape[0])
    per = max(1, _BATCH_ROWS // B)
    for start in range(0, masks.shape[0], per):
        m = masks[start:start + per]
        comp = np.where(m[:, None, :], x[None, None, :], bg[None, :, :]).reshape(-1, x.size)
        f = np.asarray(predict(comp), dtype=np.float64).reshape(m.shape[0], B)
        out[start:start + m.shape[0]] = f.mean(axis=1)
    return out


def shapley_weights(M: int) -> np.ndarray:
    """``w[s] = s! (M - s - 1)! / M!`` for coalition sizes ``s = 0..M-1``."""
    return np.array([math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M) for s in range(M)])


def shap_exact(predict: Callable, x, background, max_features: int = MAX_EXACT_FEATURES):
    """Exact Shapley values of one row by enumerating all ``2^M`` coalitions.

    Returns ``(phi, base_value)`` where ``base_value`` is the mean output on
    the background, so ``base_value + phi.sum()`` is the output on ``x``.
    """
    x, bg = _check(x, background)
    M = x.size
    if M > max_features:
        raise TooManyFeatures(f"exact enumeration limited to {max_features} features, got {M}")
    codes = np.arange(1 << M)
    bits = ((codes[:, None] >> np.arange(M)[None, :]) & 1).astype(bool)
    v = coalition_values(predict, x, bg, bits)
    size = bits.sum(axis=1)
    w = shapley_weights(M)
    phi = np.empty(M)
    for i in range(M):
        without = codes[~bits[:, i]]
        phi[i] = float(np.sum(w[size[without]] * (v[without | (1 << i)] - v[without])))
    return phi, float(v[0])


def shap_permutation(predict: Callable, x, background, n_permutations: int = 1000, seed: int = 0,
                     chunk: int = 200):
    """Monte-Carlo Shapley values from ``n_permutations`` random orderings.

    Each ordering contributes ``v(prefix + i) - v(prefix)`` to feature ``i``;
    the estimate is unbiased for the exact values. Returns
    ``(phi, base_value)``.
    """
    x, bg = _check(x, background)
    if n_permutations < 10:
        raise ValueError("n_permutations must be at least 10")
    M = x.size
    rng = np.random.default_rng(seed)
    cache = {}
    empty = np.zeros((1, M), dtype=bool)
    v_empty = coalition_values(predict, x, bg, empty)[0]
    cache[np.packbits(empty[0]).tobytes()] = v_empty
    total = np.zeros(M)
    done = 0
    while done < n_permutations:
        n = min(chunk, n_permutations - done)
        perms = np.argsort(rng.random((n, M)), axis=1)
        # prefix masks: pm[p, k] is the coalition of the first k features of perms[p]
        onehot = np.zeros((n, M, M), dtype=bool)
        onehot[np.arange(n)[:, None], np.arange(M)[None, :], perms] = True
        pm = np.concatenate([np.zeros((n, 1, M), dtype=bool), np.cumsum(onehot, axis=1).astype(bool)], axis=1)
        flat = pm.reshape(-1, M)
        keys = np.packbits(flat, axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        vals = np.empty(uniq.shape[0])
        todo = []
        for u in range(uniq.shape[0]):
            k = uniq[u].tobytes()
            if k in cache:
                vals[u] = cache[k]
            else:
                todo.append(u)
        if todo:
            first = np.empty(uniq.shape[0], dtype=np.int64)
            first[inv[::-1]] = np.arange(inv.size)[::-1]
            new = coalition_values(predict, x, bg, flat[first[todo]])
            vals[todo] = new
            for u, val in zip(todo, new):
                cache[uniq[u].tobytes()] = val
        v = vals[inv].reshape(n, M + 1)
        contrib = np.diff(v, axis=1)  # contribution of perms[p, k]
        np.add.at(total, perms.ravel(), contrib.ravel())
        done += n
    return total / n_permutations, float(v_empty)


# -- matrices and summaries -------------------------------------------------


@dataclass
class ShapMatrix:
    values: np.ndarray
    base_value: float
    feature_names: List[str]
    background_size: int
    method: str
    n_permutations: int = 0
    outputs: Optional[np.ndarray] = None
    row_index: Optional[np.ndarray] = None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + list(self.feature_names) + ["base_value", "output"])
        rows = self.row_index if self.row_index is not None else np.arange(self.values.shape[0])
        for r, vals in enumerate(self.values):
            out = "" if self.outputs is None else repr(float(self.outputs[r]))
            w.writerow([int(rows[r])] + [repr(float(v)) for v in vals] + [repr(float(self.base_value)), out])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def explain_rows(predict: Callable, X, background, feature_names: Sequence[str], method: str = "auto",
                 n_permutations: int = 200, seed: int = 0, row_index=None) -> ShapMatrix:
    """Attributions for every row of ``X``.

    ``auto`` uses exact enumeration up to 15 features and permutation
    sampling above. Row ``r`` samples with a seed spawned from ``seed``.
    """
    X = np.asarray(X, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise EmptyBackground("background set is empty")
    M = X.shape[1]
    if method == "auto":
        method = "exact" if M <= MAX_EXACT_FEATURES else "permutation"
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(X.shape[0])]
    vals = np.empty_like(X)
    base = float(np.mean(predict(bg)))
    for r in range(X.shape[0]):
        if method == "exact":
            vals[r], _ = shap_exact(predict, X[r], bg)
        elif method == "permutation":
            vals[r], _ = shap_permutation(predict, X[r], bg, n_permutations, seeds[r])
        else:
            raise ValueError(f"unknown method {method!r}")
    outputs = np.asarray(predict(X), dtype=np.float64).ravel() if X.shape[0] else np.zeros(0)
    return ShapMatrix(vals, base, list(feature_names), bg.shape[0], method,
                      n_permutations if method == "permutation" else 0, outputs,
                      None if row_index is None else np.asarray(row_index))


def sample_background(X, y, size: int = 100, seed: int = 0) -> np.ndarray:
    """Row indices of a class-stratified background sample (largest remainder quotas)."""
    X = np.asarray(X)
    y = np.asarray(y).ravel()
    n = y.size
    if n == 0:
        raise EmptyBackground("no rows to sample a background from")
    size = min(size, n)
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    members = [np.flatnonzero(y == c) for c in classes]
    quota = [len(m) * size / n for m in members]
    take = [int(math.floor(q)) for q in quota]
    for c in sorted(range(len(classes)), key=lambda c: -(quota[c] - take[c]))[: size - sum(take)]:
        take[c] += 1
    out = [rng.choice(m, t, replace=False) for m, t in zip(members, take)]
    return np.sort(np.concatenate(out))


DIRECTION_LABELS = {"prolonged": "Prolonged LOS", "short": "Short LOS", "either": "Either prolonged or short LOS"}


@dataclass
class ShapSummary:
    feature_names: List[str]
    mean_abs: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    rank: np.ndarray
    direction: List[str]
    beeswarm: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    note: str = ("mean |SHAP| is reported in probability units of the explained output; "
                 "reading it as a percentage contribution requires an extra normalization")

    def table_rows(self):
        order = np.argsort(self.rank, kind="stable")
        for j in order:
            yield (int(self.rank[j]), self.feature_names[j], float(self.mean_abs[j]),
                   float(self.ci_low[j]), float(self.ci_high[j]), self.direction[j])

    def to_csv(self, path=None, top: Optional[int] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_abs_shap", "ci_low", "ci_high", "direction", "direction_label"])
        for i, (rank, name, m, lo, hi, d) in enumerate(self.table_rows()):
            if top is not None and i >= top:
                break
            w.writerow([rank, name, f"{m:.6f}", f"{lo:.6f}", f"{hi:.6f}", d, DIRECTION_LABELS[d]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def beeswarm_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "shap", "feature_value_scaled"])
        for rank, phi, val in self.beeswarm:
            j = int(np.flatnonzero(self.rank == int(rank))[0])
            w.writerow([int(rank), self.feature_names[j], repr(float(phi)), repr(float(val))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _direction(phi, x):
    vals = np.unique(x)
    if vals.size > 2 or not np.all(np.isin(vals, (0.0, 1.0))) or vals.size < 2:
        return "either"
    m1 = float(phi[x == 1].mean())
    m0 = float(phi[x == 0].mean())
    if m1 > m0 and m1 > 0:
        return "prolonged"
    if m1 < m0 and m1 < 0:
        return "short"
    return "either"


def shap_summarize(matrix: ShapMatrix, features, n_boot: int = 1000, seed: int = 0,
                   level: float = 0.95) -> ShapSummary:
    """Mean absolute attribution per feature with bootstrap CI, rank and direction.

    ``features`` holds the explained rows' feature values (an array or an
    object with an ``X`` attribute). Direction is only assigned for 0/1
    features: ``prolonged`` when the mean attribution at 1 exceeds that at 0
    and is positive, ``short`` for the mirror case, ``either`` otherwise.
    """
    phi = np.asarray(matrix.values, dtype=np.float64)
    X = np.asarray(getattr(features, "X", features), dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] < 2:
        raise EmptyMatrix("need at least two explained rows")
    if X.shape != phi.shape:
        raise DimensionMismatch(f"feature values {X.shape} do not match attributions {phi.shape}")
    n, M = phi.shape
    A = np.abs(phi)
    mean_abs = A.mean(axis=0)
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, M))
    for b in range(n_boot):
        boots[b] = A[rng.integers(0, n, n)].mean(axis=0)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(boots, [100 * alpha, 100 * (1 - alpha)], axis=0)
    order = np.lexsort((np.arange(M), -mean_abs))
    rank = np.empty(M, dtype=np.int64)
    rank[order] = np.arange(1, M + 1)
    direction = [_direction(phi[:, j], X[:, j]) for j in range(M)]
    span = X.max(axis=0) - X.min(axis=0)
    scaled = np.where(span > 0, (X - X.min(axis=0)) / np.where(span > 0, span, 1.0), 0.5)
    bees = np.column_stack([np.repeat(rank[None, :], n, axis=0).ravel(), phi.ravel(), scaled.ravel()])
    bees = bees[np.argsort(bees[:, 0], kind="stable")]
    return ShapSummary(list(matrix.feature_names), mean_abs, np.minimum(lo, mean_abs), np.maximum(hi, mean_abs),
                       rank, direction, bees)
