"""Histogram binning and the CART builder shared by forests and imputation.

Features are mapped to at most 256 ordinal bins. A split ``code <= b`` on
binned data is the same as ``x <= edges[b]`` on raw values, so fitted trees
store raw thresholds and predict directly from unbinned inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import DimensionMismatch, EmptyInput, SingleClass

MAX_BINS = 256


class BinMapper:
    """Per-feature bin edges; exact for features with <= ``n_bins`` distinct values."""

    def __init__(self, n_bins: int = MAX_BINS):
        if not 2 <= n_bins <= MAX_BINS:
            raise ValueError(f"n_bins must lie in [2, {MAX_BINS}]")
        self.n_bins = n_bins
        self.edges: List[np.ndarray] = []

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.edges = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if u.size <= self.n_bins:
                e = (u[:-1] + u[1:]) / 2.0
            else:
                qs = np.arange(1, self.n_bins) / self.n_bins
                e = np.unique(np.quantile(X[:, j], qs))
                # keep every edge strictly below the maximum so no bin is empty on top
                e = e[e < u[-1]]
            self.edges.append(e)
        return self

    @property
    def n_edges(self) -> np.ndarray:
        return np.array([e.size for e in self.edges], dtype=np.int64)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.edges):
            raise DimensionMismatch(f"expected {len(self.edges)} features, got {X.shape[1]}")
        out = np.empty(X.shape, dtype=np.uint8)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


def canonical_order(X, y) -> np.ndarray:
    """Row order that depends only on row contents (lexicographic on X, then y)."""
    keys = np.column_stack([np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)])
    return np.lexsort(keys.T[::-1])


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs)
    n_samples: np.ndarray
    depth: int = 0

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of raw ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            inner = f >= 0
            if not inner.any():
                break
            active, nd, f = active[inner], nd[inner], f[inner]
            go_left = X[active, f] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def node_depths(self) -> np.ndarray:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return d

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [repr(float(t)) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [[repr(float(v)) for v in row] for row in self.value],
            "n_samples": self.n_samples.tolist(),
            "depth": int(self.depth),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray([float(t) for t in d["threshold"]]),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray([[float(v) for v in row] for row in d["value"]]).reshape(len(d["feature"]), -1),
            np.asarray(d["n_samples"], dtype=np.int64),
            int(d.get("depth", 0)),
        )


class PackedTrees:
    """Several trees in one node table, traversed together level by level.

    Leaves point to themselves with an infinite threshold, so every row
    simply takes ``depth`` steps. ``leaf_values`` returns the per-tree leaf
    values of every row, shape (n, n_trees, n_outputs); callers accumulate
    them tree by tree so sums match a tree-at-a-time loop exactly.
    """

    def __init__(self, trees: List[Tree], max_cells: int = 1 << 20):
        sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
        offs = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        feat, thr, kids = [], [], []
        for t, o in zip(trees, offs):
            leaf = t.feature < 0
            own = np.arange(t.n_nodes) + o
            feat.append(np.where(leaf, 0, t.feature))
            thr.append(np.where(leaf, np.inf, t.threshold))
            # children as (left, right) pairs; a leaf's pair is itself twice
            kids.append(np.column_stack([np.where(leaf, own, t.left + o), np.where(leaf, own, t.right + o)]))
        self.roots = offs.astype(np.int32)
        self.feature = np.concatenate(feat).astype(np.int32)
        self.threshold = np.concatenate(thr)
        self.children = np.concatenate(kids).astype(np.int32).ravel()
        self.value = np.concatenate([t.value for t in trees])
        self.depth = max((int(t.node_depths().max()) for t in trees), default=0)
        self.n_trees = len(trees)
        self.max_cells = max_cells

    def apply(self, X) -> np.ndarray:
        """Global leaf index of every (row, tree), shape (n, n_trees)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, p = X.shape
        out = np.empty((n, self.n_trees), dtype=np.int32)
        step = max(1, self.max_cells // max(self.n_trees, 1))
        for a in range(0, n, step):
            flat = X[a:a + step].ravel()
            m = flat.size // p if p else 0
            base = (np.arange(m, dtype=np.int32) * p)[:, None]
            node = np.broadcast_to(self.roots, (m, self.n_trees)).copy()
            for _ in range(self.depth):
                # written as not(x <= t) so NaN goes right, like Tree.apply
                left = flat.take(base + self.feature.take(node)) <= self.threshold.take(node)
                node = self.children.take(2 * node + 1 - left)
            out[a:a + step] = node
        return out

    def leaf_values(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


class _NodeArrays:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples = [], []

    def add(self, value, n):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_samples.append(n)
        return len(self.feature) - 1

    def finish(self, depth) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64).reshape(len(self.feature), -1),
            np.asarray(self.n_samples, dtype=np.int64),
            depth,
        )


def _impurity_score(nL, SL, n, S, criterion):
    """Sum over both children of sum_k S_k^2 / n_child.

    Maximising it minimises the weighted Gini impurity when ``S`` holds class
    counts for all classes but the last, and the squared error when ``S``
    holds target sums.
    """
    nR = n - nL
    SR = [t - l for t, l in zip(S, SL)]
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "gini":
            lastL = nL - sum(SL)
            lastR = nR - sum(SR)
            score = (sum(a * a for a in SL) + lastL * lastL) / nL
            score = score + (sum(a * a for a in SR) + lastR * lastR) / nR
        else:
            score = sum(a * a for a in SL) / nL + sum(a * a for a in SR) / nR
    return score, nR


def _leaf_values(sums, counts, criterion, n_outputs):
    vals = sums / counts[:, None]
    if criterion == "gini" and n_outputs > 1:
        vals = np.column_stack([vals, 1.0 - vals.sum(axis=1)])
    return vals


def grow_cart(codes, edges, y_stats, criterion, idx, max_depth, min_samples_leaf, n_feats, rng,
              n_outputs=1):
    """Grow one tree on binned ``codes`` over rows ``idx`` (duplicates allowed).

    Nodes are expanded a whole depth level at a time. Every node draws
    ``n_feats`` features without replacement in node order (``rng`` is left
    untouched when that is all features). Within a node the best split is the
    first maximum over (feature ascending, bin ascending). Impure nodes split
    even at zero gain, so XOR-like targets are separable. Leaves store class
    fractions (``gini``) or target means (``mse``); ``n_outputs > 1`` stores
    the full class distribution.
    """
    n_total, p = codes.shape
    n_edges = np.array([e.size for e in edges], dtype=np.int64)
    n_stats = y_stats.shape[1]
    all_feats = np.arange(p)

    rows = np.asarray(idx)
    feature, threshold, left, right, n_samples = [-1], [0.0], [-1], [-1], [rows.size]
    root_sums = y_stats[rows].sum(axis=0)
    values = [_leaf_values(root_sums[None, :], np.array([float(rows.size)]), criterion, n_outputs)[0]]

    node_of = np.zeros(rows.size, dtype=np.int64)  # node id per row in ``rows``
    level_nodes = np.array([0])
    depth = 0
    while level_nodes.size and depth < max_depth:
        # map level nodes to local ids; rows outside the level are finished
        local = np.full(len(feature), -1, dtype=np.int64)
        local[level_nodes] = np.arange(level_nodes.size)
        lid = local[node_of]
        in_level = lid >= 0
        r = rows[in_level]
        lid = lid[in_level]
        L = level_nodes.size
        cnt = np.bincount(lid, minlength=L).astype(np.float64)
        st = y_stats[r]
        sums = np.column_stack([np.bincount(lid, weights=st[:, k], minlength=L) for k in range(n_stats)])

        if criterion == "gini":
            last = cnt - sums.sum(axis=1)
            n_present = (sums > 0).sum(axis=1) + (last > 0)
            splittable = n_present >= 2
        else:
            lo = np.full(L, np.inf)
            hi = np.full(L, -np.inf)
            np.minimum.at(lo, lid, st[:, 0])
            np.maximum.at(hi, lid, st[:, 0])
            splittable = hi > lo
        splittable &= cnt >= 2 * min_samples_leaf
        if not splittable.any():
            break

        if n_feats >= p:
            F = np.broadcast_to(all_feats, (L, p))
        else:
            F = np.zeros((L, n_feats), dtype=np.int64)
            for j in range(L):
                if splittable[j]:
                    F[j] = np.sort(rng.choice(p, size=n_feats, replace=False))
        k = F.shape[1]
        # one segment per (node, feature slot), sized to that feature's bins
        W = (n_edges[F] + 1).ravel()
        seg_base = np.concatenate([[0], np.cumsum(W)[:-1]])
        T = int(W.sum())
        seg_of = np.repeat(np.arange(L * k), W)
        pos = np.arange(T) - seg_base[seg_of]
        node_elem = seg_of // k
        flat = (seg_base.reshape(L, k)[lid] + codes[r[:, None], F[lid]]).ravel()

        def seg_cumsum(v):
            cs = np.cumsum(v)
            return cs - np.concatenate([[0.0], cs])[seg_base][seg_of]

        nL = seg_cumsum(np.bincount(flat, minlength=T).astype(np.float64))
        SL = [seg_cumsum(np.bincount(flat, weights=np.repeat(st[:, s], k), minlength=T))
              for s in range(n_stats)]
        score, nR = _impurity_score(nL, SL, cnt[node_elem], [sums[node_elem, s] for s in range(n_stats)],
                                    criterion)
        ok = (pos < W[seg_of] - 1) & (nL >= min_samples_leaf) & (nR >= min_samples_leaf)
        ok &= splittable[node_elem]
        masked = np.where(ok, score, -np.inf)
        node_start = seg_base[:: k]
        node_max = np.maximum.reduceat(masked, node_start)
        has = np.isfinite(node_max)
        if not has.any():
            break
        hit = np.where((masked == node_max[node_elem]) & ok, np.arange(T), T)
        first_hit = np.minimum.reduceat(hit, node_start)
        e = np.where(has, first_hit, 0)
        bj = seg_of[e] % k
        bb = pos[e]
        bf = F[np.arange(L), bj]

        # allocate children in level order, left before right
        splitting = np.flatnonzero(has)
        first = len(feature)
        child_left = np.full(L, -1, dtype=np.int64)
        child_left[splitting] = first + 2 * np.arange(splitting.size)
        for j, c in zip(splitting, child_left[splitting]):
            nd = int(level_nodes[j])
            feature[nd] = int(bf[j])
            threshold[nd] = float(edges[bf[j]][bb[j]])
            left[nd] = int(c)
            right[nd] = int(c) + 1
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]

        moving = has[lid]
        rsel = r[moving]
        lsel = lid[moving]
        go_right = codes[rsel, bf[lsel]] > bb[lsel]
        child = child_left[lsel] + go_right
        pos = np.flatnonzero(in_level)[moving]
        node_of[pos] = child

        n_new = 2 * splitting.size
        cid = child - first
        c_cnt = np.bincount(cid, minlength=n_new).astype(np.float64)
        st_m = y_stats[rsel]
        c_sums = np.column_stack([np.bincount(cid, weights=st_m[:, s], minlength=n_new) for s in range(n_stats)])
        vals = _leaf_values(c_sums, c_cnt, criterion, n_outputs)
        values += list(vals)
        n_samples += c_cnt.astype(np.int64).tolist()
        level_nodes = first + np.arange(n_new)
        depth += 1

    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(values, dtype=np.float64).reshape(len(feature), -1),
        np.asarray(n_samples, dtype=np.int64),
        depth,
    )


def check_binary_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-dimensional")
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.size}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be coded 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise SingleClass("training labels contain a single class")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    return X, y


@dataclass
class TreeParams:
    max_depth: int = 6
    min_samples_leaf: int = 1
    feature_fraction: float = 1.0
    seed: int = 0
    n_bins: int = MAX_BINS


@dataclass
class DecisionTreeModel:
    tree: Tree
    n_features: int
    params: TreeParams

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        p = self.tree.predict(X)[:, 0]
        return np.column_stack([1.0 - p, p])


def n_features_for(fraction: float, p: int) -> int:
    if not 0 < fraction <= 1:
        raise ValueError("feature_fraction must lie in (0, 1]")
    return max(1, min(p, int(round(fraction * p))))


def fit_tree(X, y, params: Optional[TreeParams] = None, **kw) -> DecisionTreeModel:
    """Gini CART classifier on one binary target."""
    params = params or TreeParams(**kw)
    X, y = check_binary_xy(X, y)
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise EmptyInput("fewer than 2 * min_samples_leaf rows")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    mapper = BinMapper(params.n_bins).fit(X)
    codes = mapper.transform(X)
    stats = y[:, None].astype(np.float64)
    rng = np.random.default_rng(params.seed)
    tree = grow_cart(
        codes, mapper.edges, stats, "gini",
        np.arange(y.size), params.max_depth, params.min_samples_leaf,
        n_features_for(params.feature_fraction, X.shape[1]), rng,
    )
    return DecisionTreeModel(tree, X.shape[1], params)
