"""Second-order gradient boosting on histogram bins for the logistic loss.

Three growth strategies share the histogram machinery:

* ``levelwise``: every node of a depth is split before moving deeper.
* ``leafwise``: the leaf with the largest gain is split next, up to ``max_leaves``.
* ``oblivious``: one (feature, threshold) per depth, applied to every node.

Split gain is ``0.5 * [GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)] - gamma``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import DimensionMismatch, NonFiniteGradient
from .tree import MAX_BINS, BinMapper, PackedTrees, Tree, _NodeArrays, canonical_order, check_binary_xy

VARIANTS = ("levelwise", "leafwise", "oblivious")
_H_FLOOR = 1e-16


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y, p, eps=1e-15):
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


@dataclass
class GbtParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    max_leaves: int = 16
    l2_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    n_bins: int = MAX_BINS
    feature_fraction: float = 1.0
    seed: int = 0


@dataclass
class GbtModel:
    variant: str
    trees: List[Tree]
    learning_rate: float
    base_score: float
    bin_edges: List[np.ndarray]
    n_features: int
    params: GbtParams
    oblivious_levels: List[List[Tuple[int, float]]] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    _packed: Optional[PackedTrees] = field(init=False, default=None, repr=False, compare=False)

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        acc = np.zeros(X.shape[0])
        if self.trees:
            if self._packed is None:
                self._packed = PackedTrees(self.trees)
            V = self._packed.leaf_values(X)
            for j in range(V.shape[1]):
                acc += V[:, j, 0]
        return self.base_score + self.learning_rate * acc

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.margin(X))
        return np.column_stack([1.0 - p, p])

    def to_dict(self):
        return {
            "kind": "gbt",
            "variant": self.variant,
            "learning_rate": repr(float(self.learning_rate)),
            "base_score": repr(float(self.base_score)),
            "n_features": self.n_features,
            "params": asdict(self.params),
            "bin_edges": [[repr(float(v)) for v in e] for e in self.bin_edges],
            "oblivious_levels": [[[int(f), repr(float(t))] for f, t in lv] for lv in self.oblivious_levels],
            "train_loss": [repr(float(v)) for v in self.train_loss],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["variant"],
            [Tree.from_dict(t) for t in d["trees"]],
            float(d["learning_rate"]),
            float(d["base_score"]),
            [np.asarray([float(v) for v in e]) for e in d["bin_edges"]],
            int(d["n_features"]),
            GbtParams(**d["params"]),
            [[(int(f), float(t)) for f, t in lv] for lv in d.get("oblivious_levels", [])],
            [float(v) for v in d.get("train_loss", [])],
        )


class _NodeHist:
    """Gradient/hessian sums of one node.

    Binary (two-bin) features keep only their bin-1 sums; bin 0 is the node
    total minus bin 1. Multi-bin features keep a full (feature, bin) table.
    """

    __slots__ = ("G", "H", "Gb", "Hb", "Gm", "Hm")

    def __init__(self, G, H, Gb, Hb, Gm, Hm):
        self.G, self.H, self.Gb, self.Hb, self.Gm, self.Hm = G, H, Gb, Hb, Gm, Hm

    def __sub__(self, other):
        return _NodeHist(self.G - other.G, self.H - other.H, self.Gb - other.Gb,
                         self.Hb - other.Hb, self.Gm - other.Gm, self.Hm - other.Hm)


class _HistBuilder:
    def __init__(self, codes, n_edges):
        self.codes = codes
        self.n_features = codes.shape[1]
        self.binary = np.flatnonzero(n_edges == 1)
        self.multi = np.flatnonzero(n_edges > 1)
        self.B = np.ascontiguousarray(codes[:, self.binary], dtype=np.float64)
        self.M = np.ascontiguousarray(codes[:, self.multi]).astype(np.intp)
        # histogram width: enough bins for the finest multi-bin feature
        self.width = int(n_edges[self.multi].max()) + 1 if self.multi.size else 1
        self.M += np.arange(self.multi.size, dtype=np.intp) * self.width
        self.bin_ok = np.arange(self.width)[None, :] < n_edges[self.multi][:, None]
        # feature selection mask for the current round
        self.active = np.ones(self.n_features, dtype=bool)

    def build(self, rows, g, h) -> _NodeHist:
        gr, hr = g[rows], h[rows]
        n = self.codes.shape[0]
        if self.binary.size:
            if 5 * rows.size >= 2 * n:
                # large node: zero-masked weights against the full matrix beat a row gather
                W = np.zeros((2, n))
                W[0, rows] = gr
                W[1, rows] = hr
                S = W @ self.B
            else:
                S = np.vstack([gr, hr]) @ self.B[rows]
            Gb, Hb = S[0], S[1]
        else:
            Gb = Hb = np.zeros(0)
        nm = self.multi.size
        if nm:
            flat = (self.M if rows.size == n else self.M[rows]).ravel()
            size = nm * self.width
            Gm = np.bincount(flat, weights=np.repeat(gr, nm), minlength=size).reshape(nm, self.width)
            Hm = np.bincount(flat, weights=np.repeat(hr, nm), minlength=size).reshape(nm, self.width)
        else:
            Gm = Hm = np.zeros((0, self.width))
        return _NodeHist(float(gr.sum()), float(hr.sum()), Gb, Hb, Gm, Hm)

    def gains(self, nh: _NodeHist, lam, mcw):
        """Raw gains and validity: binary part (nb,), multi part (nm, width)."""
        G, H = nh.G, nh.H
        parent = G * G / (H + lam) if H + lam > 0 else 0.0

        def score(GL, HL):
            GR, HR = G - GL, H - HL
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
            valid = (HL >= mcw) & (HR >= mcw) & (HL > 0) & (HR > 0)
            return valid, gain

        # binary features: code 0 goes left
        vb, gb = score(G - nh.Gb, H - nh.Hb)
        vb &= self.active[self.binary]
        vm, gm = score(np.cumsum(nh.Gm, axis=1), np.cumsum(nh.Hm, axis=1))
        vm &= self.bin_ok & self.active[self.multi][:, None]
        return np.where(vb, gb, 0.0), vb, np.where(vm, gm, 0.0), vm

    def best(self, gb, vb, gm, vm):
        """Best (feature, bin, gain); ties -> lowest feature, then lowest bin."""
        per_gain = np.full(self.n_features, -np.inf)
        per_bin = np.zeros(self.n_features, dtype=np.int64)
        if self.binary.size:
            per_gain[self.binary] = np.where(vb, gb, -np.inf)
        if self.multi.size:
            masked = np.where(vm, gm, -np.inf)
            bins = np.argmax(masked, axis=1)
            per_gain[self.multi] = masked[np.arange(self.multi.size), bins]
            per_bin[self.multi] = bins
        f = int(np.argmax(per_gain))
        if not np.isfinite(per_gain[f]):
            return None
        return f, int(per_bin[f]), float(per_gain[f])


class _Grower:
    def __init__(self, codes, edges, hb: _HistBuilder, g, h, params: GbtParams):
        self.codes = codes
        self.edges = edges
        self.hb = hb
        self.g = g
        self.h = h
        self.p = params
        self.nodes = _NodeArrays()

    def leaf_value(self, rows):
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        denom = H + self.p.l2_lambda
        return [-G / denom if denom > 0 else 0.0]

    def _best_split(self, nh):
        gb, vb, gm, vm = self.hb.gains(nh, self.p.l2_lambda, self.p.min_child_weight)
        return self.hb.best(gb, vb, gm, vm)

    def _children_hists(self, rows_l, rows_r, parent):
        if rows_l.size <= rows_r.size:
            hl = self.hb.build(rows_l, self.g, self.h)
            return hl, parent - hl
        hr = self.hb.build(rows_r, self.g, self.h)
        return parent - hr, hr

    def _apply_split(self, node, rows, f, b):
        go_left = self.codes[rows, f] <= b
        lrows, rrows = rows[go_left], rows[~go_left]
        li = self.nodes.add(self.leaf_value(lrows), lrows.size)
        ri = self.nodes.add(self.leaf_value(rrows), rrows.size)
        self.nodes.feature[node] = f
        self.nodes.threshold[node] = float(self.edges[f][b])
        self.nodes.left[node] = li
        self.nodes.right[node] = ri
        return li, ri, lrows, rrows

    def grow_levelwise(self, rows):
        p = self.p
        root = self.nodes.add(self.leaf_value(rows), rows.size)
        level = [(root, rows, self.hb.build(rows, self.g, self.h))]
        depth = 0
        while level and depth < p.max_depth:
            nxt = []
            for node, r, nh in level:
                best = self._best_split(nh)
                if best is None or best[2] - p.gamma <= 0:
                    continue
                f, b, _ = best
                li, ri, lr, rr = self._apply_split(node, r, f, b)
                hl, hr = self._children_hists(lr, rr, nh)
                nxt += [(li, lr, hl), (ri, rr, hr)]
            if nxt:
                depth += 1
            level = nxt
        return self.nodes.finish(depth), None

    def grow_leafwise(self, rows):
        p = self.p
        max_depth = p.max_depth if p.max_depth > 0 else 10 ** 9
        root = self.nodes.add(self.leaf_value(rows), rows.size)
        cands = {}

        def consider(node, r, nh, depth):
            if depth >= max_depth:
                return
            best = self._best_split(nh)
            if best is not None and best[2] - p.gamma > 0:
                cands[node] = (best, r, nh, depth)

        consider(root, rows, self.hb.build(rows, self.g, self.h), 0)
        n_leaves, reached = 1, 0
        while cands and n_leaves < p.max_leaves:
            # largest gain first; ties go to the earliest-created leaf
            node = max(cands, key=lambda k: (cands[k][0][2], -k))
            (f, b, _), r, nh, depth = cands.pop(node)
            li, ri, lr, rr = self._apply_split(node, r, f, b)
            n_leaves += 1
            reached = max(reached, depth + 1)
            hl, hr = self._children_hists(lr, rr, nh)
            consider(li, lr, hl, depth + 1)
            consider(ri, rr, hr, depth + 1)
        return self.nodes.finish(reached), None

    def grow_oblivious(self, rows):
        p = self.p
        hb = self.hb
        root = self.nodes.add(self.leaf_value(rows), rows.size)
        level = [(root, rows, hb.build(rows, self.g, self.h))]
        splits = []
        for _ in range(p.max_depth):
            tb = np.zeros(hb.binary.size)
            tvb = np.zeros(hb.binary.size, dtype=bool)
            tm = np.zeros((hb.multi.size, hb.width))
            tvm = np.zeros((hb.multi.size, hb.width), dtype=bool)
            for _, _, nh in level:
                gb, vb, gm, vm = hb.gains(nh, p.l2_lambda, p.min_child_weight)
                tb += gb
                tvb |= vb
                tm += gm
                tvm |= vm
            best = hb.best(tb, tvb, tm, tvm)
            if best is None or best[2] - p.gamma * len(level) <= 0:
                break
            f, b, _ = best
            nxt = []
            for node, r, nh in level:
                li, ri, lr, rr = self._apply_split(node, r, f, b)
                hl, hr = self._children_hists(lr, rr, nh)
                nxt += [(li, lr, hl), (ri, rr, hr)]
            splits.append((f, float(self.edges[f][b])))
            level = nxt
        return self.nodes.finish(len(splits)), splits


def fit_gbt(X, y, variant: str = "levelwise", params: Optional[GbtParams] = None, **kw) -> GbtModel:
    """Boosted trees on the logistic loss.

    ``base_score`` is the log-odds of the training positive rate; every round
    adds ``learning_rate`` times a Newton-step tree.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    params = params or GbtParams(**kw)
    if params.n_bins > MAX_BINS:
        raise ValueError(f"n_bins must be <= {MAX_BINS}")
    X, y = check_binary_xy(X, y)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n, nf = X.shape
    mapper = BinMapper(params.n_bins).fit(X)
    codes = mapper.transform(X)
    n_edges = mapper.n_edges
    rate = float(y.mean())
    base = math.log(rate / (1.0 - rate))
    margin = np.full(n, base)
    rng = np.random.default_rng(params.seed)
    k = max(1, min(nf, int(round(params.feature_fraction * nf))))
    all_rows = np.arange(n)
    trees, levels = [], []
    losses = [log_loss(y, sigmoid(margin))]
    hb = _HistBuilder(codes, n_edges)
    for rnd in range(params.n_rounds):
        p = sigmoid(margin)
        g = p - y
        h = np.maximum(p * (1.0 - p), _H_FLOOR)
        if not (np.isfinite(g).all() and np.isfinite(h).all()):
            bad = int((~np.isfinite(g)).sum() + (~np.isfinite(h)).sum())
            raise NonFiniteGradient(
                f"non-finite gradient in round {rnd}", round=rnd, n_bad=bad,
                margin_min=float(np.nanmin(margin)), margin_max=float(np.nanmax(margin)),
            )
        if k < nf:
            hb.active[:] = False
            hb.active[rng.choice(nf, size=k, replace=False)] = True
        grower = _Grower(codes, mapper.edges, hb, g, h, params)
        tree, lv = getattr(grower, f"grow_{variant}")(all_rows)
        trees.append(tree)
        if lv is not None:
            levels.append(lv)
        margin = margin + params.learning_rate * tree.predict(X)[:, 0]
        losses.append(log_loss(y, sigmoid(margin)))
    return GbtModel(variant, trees, params.learning_rate, base, mapper.edges, nf, params,
                    levels, losses)
