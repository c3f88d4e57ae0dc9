"""Random hyperparameter search and the four-model stacking ensemble.

The stack: a random forest and three boosted-tree variants produce
positive-class probabilities; their plain average (soft voting) is the single
input of a Gaussian Naive Bayes meta-learner. The meta-learner is fitted on
out-of-fold averages, so no row's meta input comes from a model that saw it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import stratified_kfold
from .errors import DimensionMismatch, LosmlError, TooFewRows
from .evaluation import auc
from .learners import (
    MODEL_FORMAT_VERSION,
    ForestParams,
    GbtParams,
    GnbModel,
    LogisticParams,
    fit_gbt,
    fit_gnb,
    fit_logistic,
    fit_random_forest,
    model_from_dict,
    model_to_dict,
)
from .learners.tree import check_binary_xy

BASE_KINDS = ("forest", "gbt_levelwise", "gbt_leafwise", "gbt_oblivious")
MODEL_KINDS = BASE_KINDS + ("logistic",)
BUNDLE_VERSION = 1


def params_class(kind: str):
    if kind == "forest":
        return ForestParams
    if kind.startswith("gbt_"):
        return GbtParams
    if kind == "logistic":
        return LogisticParams
    raise LosmlError(f"unknown model kind {kind!r}")


def make_params(kind: str, values: Optional[dict] = None, seed: Optional[int] = None):
    cls = params_class(kind)
    known = {f.name for f in fields(cls)}
    vals = {k: v for k, v in (values or {}).items() if k in known}
    if seed is not None and "seed" in known:
        vals["seed"] = int(seed)
    return cls(**vals)


def fit_model(kind: str, X, y, params=None, seed: Optional[int] = None):
    """Fit one learner of ``kind`` with ``params`` (dataclass or dict)."""
    if params is None or isinstance(params, dict):
        params = make_params(kind, params, seed)
    elif seed is not None and hasattr(params, "seed"):
        params = type(params)(**{**asdict(params), "seed": int(seed)})
    if kind == "forest":
        return fit_random_forest(X, y, params)
    if kind.startswith("gbt_"):
        return fit_gbt(X, y, kind[4:], params)
    if kind == "logistic":
        return fit_logistic(X, y, params)
    raise LosmlError(f"unknown model kind {kind!r}")


def positive_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)[:, 1]


# -- search spaces ---------------------------------------------------------


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int  # inclusive

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class Choice:
    values: tuple

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]


def _dist_to_dict(d):
    return {"type": type(d).__name__, **asdict(d)}


def _dist_from_dict(d):
    kind = {"IntRange": IntRange, "Uniform": Uniform, "LogUniform": LogUniform, "Choice": Choice}[d["type"]]
    args = {k: v for k, v in d.items() if k != "type"}
    if kind is Choice:
        args["values"] = tuple(args["values"])
    return kind(**args)


@dataclass
class SearchSpace:
    distributions: Dict[str, Dict[str, object]]
    n_iter: int = 30
    k_folds: int = 5
    seed: int = 0

    def sample(self, kind: str, rng) -> dict:
        """One configuration; parameters are drawn in sorted name order."""
        dist = self.distributions[kind]
        return {name: dist[name].sample(rng) for name in sorted(dist)}

    def to_dict(self):
        return {
            "n_iter": self.n_iter, "k_folds": self.k_folds, "seed": self.seed,
            "distributions": {k: {n: _dist_to_dict(d) for n, d in v.items()} for k, v in self.distributions.items()},
        }

    @classmethod
    def from_dict(cls, d):
        dists = {k: {n: _dist_from_dict(x) for n, x in v.items()} for k, v in d["distributions"].items()}
        return cls(dists, d.get("n_iter", 30), d.get("k_folds", 5), d.get("seed", 0))


def default_search_space(n_iter: int = 30, seed: int = 0) -> SearchSpace:
    gbt_common = {
        "n_rounds": IntRange(50, 200),
        "learning_rate": LogUniform(0.02, 0.3),
        "l2_lambda": LogUniform(0.1, 10.0),
        "min_child_weight": LogUniform(0.5, 20.0),
        "feature_fraction": Uniform(0.5, 1.0),
    }
    return SearchSpace(
        {
            "forest": {
                "n_trees": IntRange(50, 200),
                "max_depth": IntRange(4, 12),
                "min_samples_leaf": IntRange(1, 20),
                "feature_fraction": Uniform(0.1, 0.6),
            },
            "gbt_levelwise": {**gbt_common, "max_depth": IntRange(2, 6)},
            "gbt_leafwise": {**gbt_common, "max_leaves": IntRange(8, 48), "max_depth": Choice((0, 8))},
            "gbt_oblivious": {**gbt_common, "max_depth": IntRange(2, 7)},
            "logistic": {"l2_lambda": LogUniform(1e-4, 1.0)},
        },
        n_iter,
        5,
        seed,
    )


#: base-model settings used when no search is run: shallow, slowly-learning
#: boosters and a forest with larger leaves, which suit mostly additive signal
DEFAULT_BASE_PARAMS = {
    "forest": {"n_trees": 100, "max_depth": 8, "min_samples_leaf": 20, "feature_fraction": 0.5},
    "gbt_levelwise": {"n_rounds": 150, "learning_rate": 0.1, "max_depth": 2},
    "gbt_leafwise": {"n_rounds": 150, "learning_rate": 0.1, "max_leaves": 4},
    "gbt_oblivious": {"n_rounds": 150, "learning_rate": 0.1, "max_depth": 2},
}


@dataclass
class SearchResult:
    kind: str
    best_params: dict
    best_auc: float
    rows: List[dict]

    def to_dict(self):
        return {
            "kind": self.kind,
            "best_params": self.best_params,
            "best_auc": repr(float(self.best_auc)),
            "rows": [{"iteration": r["iteration"], "params": r["params"],
                      "fold_auc": [repr(float(a)) for a in r["fold_auc"]],
                      "mean_auc": repr(float(r["mean_auc"]))} for r in self.rows],
        }


def random_search(kind: str, space: SearchSpace, X, y, n_iter: Optional[int] = None) -> SearchResult:
    """Sample configurations and keep the best mean validation AUC.

    Every configuration is scored on the same stratified ``k_folds``
    partition. Ties go to the configuration sampled first.
    """
    n_iter = space.n_iter if n_iter is None else n_iter
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    X, y = check_binary_xy(X, y)
    root = np.random.SeedSequence(space.seed)
    sample_seq, fold_seq, fit_seq = root.spawn(3)
    rng = np.random.default_rng(sample_seq)
    folds = stratified_kfold(y, space.k_folds, int(fold_seq.generate_state(1)[0]))
    fit_seeds = fit_seq.generate_state(n_iter)
    rows = []
    best, best_auc = None, -np.inf
    for it in range(n_iter):
        cfg = space.sample(kind, rng)
        scores = []
        for tr, te in folds:
            model = fit_model(kind, X[tr], y[tr], cfg, seed=int(fit_seeds[it]))
            scores.append(auc(positive_proba(model, X[te]), y[te]))
        mean = float(np.mean(scores))
        rows.append({"iteration": it, "params": cfg, "fold_auc": scores, "mean_auc": mean})
        if mean > best_auc:
            best, best_auc = cfg, mean
    return SearchResult(kind, best, best_auc, rows)


# -- stacking --------------------------------------------------------------


@dataclass
class StackedModel:
    base_kinds: List[str]
    base_models: list
    meta: GnbModel
    base_params: Dict[str, dict]
    oof_seed: int
    k_oof: int
    meta_input_arity: int = 1
    oof_probabilities: Optional[np.ndarray] = None  # (n_train, 4) out-of-fold base outputs
    n_features: int = 0

    def base_probabilities(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        return np.column_stack([positive_proba(m, X) for m in self.base_models])

    def meta_inputs(self, X) -> np.ndarray:
        P = self.base_probabilities(X)
        return meta_features(P, self.meta_input_arity)

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.meta_inputs(X))

    def to_dict(self):
        return {
            "format_version": BUNDLE_VERSION,
            "model_format_version": MODEL_FORMAT_VERSION,
            "kind": "stacking",
            "base_kinds": list(self.base_kinds),
            "base_models": [model_to_dict(m) for m in self.base_models],
            "meta": model_to_dict(self.meta),
            "base_params": self.base_params,
            "oof_seed": self.oof_seed,
            "k_oof": self.k_oof,
            "meta_input_arity": self.meta_input_arity,
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {d.get('format_version')}")
        return cls(
            list(d["base_kinds"]),
            [model_from_dict(m) for m in d["base_models"]],
            model_from_dict(d["meta"]),
            dict(d["base_params"]),
            int(d["oof_seed"]),
            int(d["k_oof"]),
            int(d.get("meta_input_arity", 1)),
            None,
            int(d["n_features"]),
        )


def meta_features(P, arity: int = 1) -> np.ndarray:
    """Soft-vote average as one column, or all base outputs when ``arity`` is 4."""
    P = np.asarray(P, dtype=np.float64)
    if arity == 1:
        return P.mean(axis=1, keepdims=True)
    if arity == P.shape[1]:
        return P
    raise ValueError(f"meta input arity must be 1 or {P.shape[1]}")


def _seed_grid(seed, k, n_models):
    # one seed per (fold, model) plus one per model for the final refit
    root = np.random.SeedSequence(seed)
    s = root.generate_state((k + 1) * n_models).reshape(k + 1, n_models)
    return s.astype(np.int64)


def oof_predictions(X, y, base_params: Dict[str, dict], k_oof: int = 5, seed: int = 0,
                    kinds: Sequence[str] = BASE_KINDS, only_folds: Optional[Sequence[int]] = None,
                    folds: Optional[list] = None):
    """Out-of-fold positive probabilities of each base model, shape (n, len(kinds)).

    Rows of fold ``f`` are predicted by models fitted on the other folds.
    ``only_folds`` restricts the work to some folds (other rows stay NaN);
    ``folds`` fixes the partition instead of drawing it from ``y``.
    """
    X, y = check_binary_xy(X, y)
    if folds is None:
        folds = stratified_kfold(y, k_oof, seed)
    elif len(folds) != k_oof:
        raise ValueError(f"expected {k_oof} folds, got {len(folds)}")
    seeds = _seed_grid(seed, k_oof, len(kinds))
    P = np.full((y.size, len(kinds)), np.nan)
    for f, (tr, te) in enumerate(folds):
        if only_folds is not None and f not in only_folds:
            continue
        for j, kind in enumerate(kinds):
            m = fit_model(kind, X[tr], y[tr], base_params.get(kind), seed=int(seeds[f, j]))
            P[te, j] = positive_proba(m, X[te])
    return P, folds


def fit_stacking(X, y, base_params: Optional[Dict[str, dict]] = None, k_oof: int = 5, seed: int = 0,
                 meta_input_arity: int = 1) -> StackedModel:
    """Out-of-fold stacking: base models -> average -> Gaussian Naive Bayes.

    1. stratified ``k_oof`` folds; each fold's rows get probabilities from the
       four base models fitted on the remaining folds;
    2. the four probabilities are averaged per row;
    3. the meta-learner is fitted on that average against ``y``;
    4. the base models are refitted on all rows.
    """
    X, y = check_binary_xy(X, y)
    if y.size < 10 * k_oof:
        raise TooFewRows(f"stacking with {k_oof} folds needs at least {10 * k_oof} rows, got {y.size}")
    base_params = {k: dict(v) for k, v in (base_params or {}).items()}
    P, _ = oof_predictions(X, y, base_params, k_oof, seed)
    meta = fit_gnb(meta_features(P, meta_input_arity), y)
    seeds = _seed_grid(seed, k_oof, len(BASE_KINDS))
    models = [fit_model(kind, X, y, base_params.get(kind), seed=int(seeds[k_oof, j]))
              for j, kind in enumerate(BASE_KINDS)]
    stored = {kind: asdict(make_params(kind, base_params.get(kind), int(seeds[k_oof, j])))
              for j, kind in enumerate(BASE_KINDS)}
    return StackedModel(list(BASE_KINDS), models, meta, stored, seed, k_oof, meta_input_arity, P, X.shape[1])


def predict_stacking(model: StackedModel, X) -> np.ndarray:
    """Final positive-class probability of the stack."""
    return model.predict_proba(X)[:, 1]


def classify(probabilities, threshold: float = 0.5) -> np.ndarray:
    """Label 1 (prolonged) iff probability >= ``threshold``."""
    return (np.asarray(probabilities, dtype=np.float64) >= threshold).astype(np.int64)


def save_bundle(model, path) -> None:
    d = model.to_dict() if isinstance(model, StackedModel) else model_to_dict(model)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bundle(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("kind") == "stacking":
        return StackedModel.from_dict(d)
    return model_from_dict(d)
