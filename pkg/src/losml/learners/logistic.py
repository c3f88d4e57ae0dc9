"""L2-penalized logistic regression fitted by damped Newton iterations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import DimensionMismatch
from .gbt import sigmoid
from .tree import check_binary_xy


@dataclass
class LogisticParams:
    l2_lambda: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 100


def penalized_loss(w, b, X, y, l2_lambda):
    """Mean negative log-likelihood plus ``l2_lambda/2 * ||w||^2``.

    Returns ``(loss, grad_w, grad_b)``. The intercept is not penalized.
    Using the mean keeps the optimum unchanged when the data are replicated.
    """
    z = X @ w + b
    # log(1 + e^z) - y z, written to avoid overflow
    nll = np.logaddexp(0.0, z) - y * z
    n = y.size
    r = sigmoid(z) - y
    loss = float(nll.mean() + 0.5 * l2_lambda * (w @ w))
    gw = X.T @ r / n + l2_lambda * w
    gb = float(r.mean())
    return loss, gw, gb


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    l2_lambda: float
    converged: bool
    n_iter: int
    loss_history: List[float] = field(default_factory=list)
    params: LogisticParams = field(default_factory=LogisticParams)

    @property
    def n_features(self):
        return self.weights.size

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.weights.size:
            raise DimensionMismatch(f"expected {self.weights.size} features, got {X.shape[-1]}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def to_dict(self):
        return {
            "kind": "logistic",
            "weights": [repr(float(v)) for v in self.weights],
            "intercept": repr(float(self.intercept)),
            "l2_lambda": repr(float(self.l2_lambda)),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "loss_history": [repr(float(v)) for v in self.loss_history],
            "params": asdict(self.params),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray([float(v) for v in d["weights"]]),
            float(d["intercept"]),
            float(d["l2_lambda"]),
            bool(d["converged"]),
            int(d["n_iter"]),
            [float(v) for v in d.get("loss_history", [])],
            LogisticParams(**d.get("params", {})),
        )


def fit_logistic(X, y, params: Optional[LogisticParams] = None, **kw) -> LogisticModel:
    """Newton's method with step halving on the penalized mean log-loss.

    Stops when the gradient max-norm falls below ``tol`` and the Newton step
    is below ``sqrt(tol)`` (``converged``), after ``max_iter`` iterations, or
    when no halved step lowers the loss.
    Accepted iterations never increase the loss.
    """
    params = params or LogisticParams(**kw)
    X, y = check_binary_xy(X, y)
    yf = y.astype(np.float64)
    n, p = X.shape
    lam = float(params.l2_lambda)
    A = np.hstack([X, np.ones((n, 1))])
    pen = np.full(p + 1, lam)
    pen[-1] = 0.0

    w = np.zeros(p)
    rate = yf.mean()
    b = float(np.log(rate / (1.0 - rate)))
    loss, gw, gb = penalized_loss(w, b, X, yf, lam)
    history = [loss]
    converged = False
    it = 0
    step_tol = np.sqrt(params.tol)
    for it in range(1, params.max_iter + 1):
        grad = np.append(gw, gb)
        s = sigmoid(A @ np.append(w, b))
        weight = s * (1.0 - s)
        H = (A * weight[:, None]).T @ A / n + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # a vanishing gradient with a large Newton step is a flat, diverging
        # direction (separation), not an optimum
        if np.max(np.abs(grad)) < params.tol and np.max(np.abs(step)) < step_tol:
            converged = True
            it -= 1
            break
        t = 1.0
        accepted = False
        for _ in range(50):
            w_new = w - t * step[:-1]
            b_new = b - t * step[-1]
            new_loss, new_gw, new_gb = penalized_loss(w_new, b_new, X, yf, lam)
            if np.isfinite(new_loss) and new_loss <= loss:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        history.append(loss)
    return LogisticModel(w, float(b), lam, bool(converged), it, history, params)
