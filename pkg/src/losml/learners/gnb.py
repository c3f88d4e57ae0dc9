"""Gaussian Naive Bayes, used as the stacking meta-learner."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionMismatch
from .tree import check_binary_xy


@dataclass
class GnbModel:
    """Class priors plus per-class, per-feature Gaussian means and variances.

    ``variances`` already include the smoothing term ``var_smoothing``.
    Rows index classes 0 and 1.
    """

    class_priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_smoothing: float = 0.0

    @property
    def n_features(self):
        return self.means.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.means.shape[0]))
        for c in range(self.means.shape[0]):
            var = self.variances[c]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * var)) - 0.5 * np.sum((X - self.means[c]) ** 2 / var, axis=1)
            out[:, c] = np.log(self.class_priors[c]) + ll
        return out

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        e = np.exp(jll)
        prob = e / e.sum(axis=1, keepdims=True)
        # two-class outputs are complementary by construction
        prob[:, 0] = 1.0 - prob[:, 1]
        return prob

    def to_dict(self):
        return {
            "kind": "gnb",
            "class_priors": [repr(float(v)) for v in self.class_priors],
            "means": [[repr(float(v)) for v in row] for row in self.means],
            "variances": [[repr(float(v)) for v in row] for row in self.variances],
            "var_smoothing": repr(float(self.var_smoothing)),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray([float(v) for v in d["class_priors"]]),
            np.asarray([[float(v) for v in row] for row in d["means"]]),
            np.asarray([[float(v) for v in row] for row in d["variances"]]),
            float(d["var_smoothing"]),
        )


def fit_gnb(features, y, var_smoothing: Optional[float] = None, smoothing_factor: float = 1e-9) -> GnbModel:
    """Fit per-class Gaussians with maximum-likelihood (population) variances.

    The variance floor defaults to ``smoothing_factor`` times the largest
    per-feature variance of ``features``, added to every class variance.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    X, y = check_binary_xy(X, y)
    if var_smoothing is None:
        var_smoothing = smoothing_factor * float(np.var(X, axis=0).max())
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        means.append(Xc.mean(axis=0))
        variances.append(Xc.var(axis=0) + var_smoothing)
        priors.append(Xc.shape[0] / X.shape[0])
    variances = np.asarray(variances)
    if np.any(variances <= 0):
        # every feature constant overall; fall back to a unit floor
        variances = np.where(variances <= 0, 1.0, variances)
    return GnbModel(np.asarray(priors), np.asarray(means), variances, float(var_smoothing))
