"""Bagged CART forests for binary classification, multiclass and regression."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import DimensionMismatch, EmptyInput
from .tree import (
    MAX_BINS,
    BinMapper,
    PackedTrees,
    Tree,
    canonical_order,
    check_binary_xy,
    grow_cart,
    n_features_for,
)


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 5
    feature_fraction: float = 0.3
    seed: int = 0
    bootstrap: bool = True
    oob: bool = False
    n_bins: int = MAX_BINS


@dataclass
class ForestModel:
    trees: List[Tree]
    n_features: int
    params: ForestParams
    task: str = "binary"  # binary | multiclass | regression
    n_classes: int = 2
    oob_score: Optional[float] = None
    seed: int = field(init=False, default=0)
    _packed: Optional[PackedTrees] = field(init=False, default=None, repr=False, compare=False)

    def __post_init__(self):
        self.seed = self.params.seed

    @property
    def oob_enabled(self):
        return self.params.oob

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X

    def predict_raw(self, X) -> np.ndarray:
        """Mean leaf value over trees: (n, 1) for binary/regression, (n, K) for multiclass."""
        X = self._check(X)
        if self._packed is None:
            self._packed = PackedTrees(self.trees)
        V = self._packed.leaf_values(X)
        acc = np.zeros((X.shape[0], V.shape[2]))
        for j in range(V.shape[1]):
            acc += V[:, j]
        return acc / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        raw = self.predict_raw(X)
        if self.task == "binary":
            p = np.clip(raw[:, 0], 0.0, 1.0)
            return np.column_stack([1.0 - p, p])
        if self.task == "multiclass":
            return raw / raw.sum(axis=1, keepdims=True)
        raise TypeError("predict_proba is undefined for a regression forest")

    def predict(self, X) -> np.ndarray:
        raw = self.predict_raw(X)
        if self.task == "regression":
            return raw[:, 0]
        if self.task == "multiclass":
            return np.argmax(raw, axis=1)
        return (raw[:, 0] >= 0.5).astype(np.int64)

    def to_dict(self):
        return {
            "kind": "forest",
            "task": self.task,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "oob_score": None if self.oob_score is None else repr(float(self.oob_score)),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(
            [Tree.from_dict(t) for t in d["trees"]],
            int(d["n_features"]),
            ForestParams(**d["params"]),
            d.get("task", "binary"),
            int(d.get("n_classes", 2)),
            None if d.get("oob_score") is None else float(d["oob_score"]),
        )
        return m


def _grow_forest(X, target, task, n_classes, params: ForestParams):
    """Shared driver; ``X``/``target`` must already be in canonical row order."""
    n, p = X.shape
    mapper = BinMapper(params.n_bins).fit(X)
    codes = mapper.transform(X)
    if task == "regression":
        stats = target[:, None].astype(np.float64)
        criterion, n_out = "mse", 1
    elif task == "binary":
        stats = target[:, None].astype(np.float64)
        criterion, n_out = "gini", 1
    else:
        # indicators for all classes but the last (see grow_cart)
        stats = (target[:, None] == np.arange(n_classes - 1)[None, :]).astype(np.float64)
        criterion, n_out = "gini", n_classes

    n_feats = n_features_for(params.feature_fraction, p)
    seqs = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    trees, oob_sum, oob_cnt = [], None, None
    if params.oob and params.bootstrap and task == "binary":
        oob_sum, oob_cnt = np.zeros(n), np.zeros(n)
    for ss in seqs:
        rng = np.random.default_rng(ss)
        rows = np.sort(rng.integers(0, n, n)) if params.bootstrap else np.arange(n)
        tree = grow_cart(codes, mapper.edges, stats, criterion, rows,
                         params.max_depth, params.min_samples_leaf, n_feats, rng, n_out)
        trees.append(tree)
        if oob_sum is not None:
            out = np.ones(n, dtype=bool)
            out[rows] = False
            if out.any():
                oob_sum[out] += tree.predict(X[out])[:, 0]
                oob_cnt[out] += 1
    oob_score = None
    if oob_sum is not None and (oob_cnt > 0).any():
        seen = oob_cnt > 0
        pred = (oob_sum[seen] / oob_cnt[seen]) >= 0.5
        oob_score = float((pred == target[seen].astype(bool)).mean())
    return trees, oob_score


def fit_random_forest(X, y, params: Optional[ForestParams] = None, **kw) -> ForestModel:
    """Random forest classifier; probabilities are mean leaf positive fractions."""
    params = params or ForestParams(**kw)
    X, y = check_binary_xy(X, y)
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise EmptyInput("fewer than 2 * min_samples_leaf rows")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    order = canonical_order(X, y)
    trees, oob = _grow_forest(X[order], y[order], "binary", 2, params)
    return ForestModel(trees, X.shape[1], params, "binary", 2, oob)


def fit_forest_regressor(X, target, params: Optional[ForestParams] = None, **kw) -> ForestModel:
    """Mean-leaf regression forest (squared-error splits)."""
    params = params or ForestParams(**kw)
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    order = canonical_order(X, t)
    trees, _ = _grow_forest(X[order], t[order], "regression", 0, params)
    return ForestModel(trees, X.shape[1], params, "regression", 0)


def fit_forest_classifier(X, target, n_classes: int, params: Optional[ForestParams] = None, **kw) -> ForestModel:
    """Multiclass Gini forest over integer labels ``0..n_classes-1``."""
    params = params or ForestParams(**kw)
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(target, dtype=np.int64).ravel()
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    order = canonical_order(X, t)
    task = "binary" if n_classes == 2 else "multiclass"
    trees, _ = _grow_forest(X[order], t[order], task, n_classes, params)
    return ForestModel(trees, X.shape[1], params, task, n_classes)
