"""Missing-data tiers and categorical rebalancing.

Per predictor column, with missing fraction ``m``:

* ``m > 0.15``           -> drop the column
* ``0.02 <= m <= 0.15``  -> iterative forest imputation
* ``0 < m < 0.02``       -> median (continuous) / mode (categorical)
* ``m == 0``             -> keep

Categorical columns whose most frequent category holds at least 98% of the
observed values are dropped. In columns with three or more categories, a
category under 2% is merged into its adjacent category (ordered columns) or
into the most frequent category (unordered), until none is rare or only two
remain.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import ColumnSpec, Table
from .errors import AllMissingColumn, NoPredictorsAvailable
from .learners.forest import ForestParams, fit_forest_classifier, fit_forest_regressor

DROP_MISSING = 0.15
SIMPLE_BELOW = 0.02
DOMINANT_AT = 0.98
RARE_BELOW = 0.02

MISSING_ACTIONS = ("drop_missing_gt_15", "impute_median", "impute_mode", "impute_forest", "keep")
REBALANCE_ACTIONS = ("drop_dominant_98", "merge_rare_2", "keep")


@dataclass
class ColumnPlan:
    name: str
    kind: str
    missing_fraction: float
    action: str
    rebalance: str = "keep"
    dominant_fraction: Optional[float] = None
    merge_map: Dict[str, str] = field(default_factory=dict)
    rare_kept: List[str] = field(default_factory=list)  # rare levels left in two-level columns


@dataclass
class PrepPlan:
    columns: Dict[str, ColumnPlan]
    outcome: Optional[str] = None

    def action(self, name):
        return self.columns[name].action

    def dropped(self) -> List[str]:
        return [c.name for c in self.columns.values()
                if c.action == "drop_missing_gt_15" or c.rebalance == "drop_dominant_98"]

    def is_all_keep(self) -> bool:
        return all(c.action == "keep" and c.rebalance == "keep" for c in self.columns.values())

    def to_dict(self):
        return {"outcome": self.outcome, "columns": [asdict(c) for c in self.columns.values()]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        cols = {c["name"]: ColumnPlan(**c) for c in d["columns"]}
        return cls(cols, d.get("outcome"))


def missing_action(m: float, kind: str) -> str:
    """Tier for a missing fraction: ``>0.15`` drop, ``<0.02`` simple, between forest."""
    if m > DROP_MISSING:
        return "drop_missing_gt_15"
    if m == 0:
        return "keep"
    if m < SIMPLE_BELOW:
        return "impute_mode" if kind == "categorical" else "impute_median"
    return "impute_forest"


# -- category merging ------------------------------------------------------

_RANGE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*-\s*(-?\d+(?:\.\d+)?)\s*$")
_BELOW = re.compile(r"^\s*(?:<|<=|≤)\s*(-?\d+(?:\.\d+)?)\s*$")
_ABOVE = re.compile(r"^\s*(?:(?:>|>=|≥)\s*(-?\d+(?:\.\d+)?)|(-?\d+(?:\.\d+)?)\s*\+)\s*$")


def _bounds(label):
    m = _RANGE.match(label)
    if m:
        return m.group(1), m.group(2)
    m = _BELOW.match(label)
    if m:
        return None, m.group(1)
    m = _ABOVE.match(label)
    if m:
        return m.group(1) or m.group(2), None
    return False


def merged_label(lower: str, upper: str) -> str:
    """Name for two adjacent ordered categories, ``lower`` preceding ``upper``.

    Numeric ranges are joined: ``"<50"`` + ``"50-99"`` -> ``"<99"``,
    ``"100-199"`` + ``"200+"`` -> ``"100+"``. Other labels are joined with
    ``"/"``.
    """
    a, b = _bounds(lower), _bounds(upper)
    if a is False or b is False:
        return f"{lower}/{upper}"
    lo, hi = a[0], b[1]
    if lo is None and hi is None:
        return f"{lower}/{upper}"
    if lo is None:
        return f"<{hi}"
    if hi is None:
        return f"{lo}+"
    return f"{lo}-{hi}"


def plan_merges(categories: Sequence[str], counts: Sequence[float], ordered: bool, rare_below: float = RARE_BELOW):
    """Merge map (old label -> final label) for one categorical column.

    The rarest category under the threshold is merged first (earliest
    declared on ties); merging stops when no category is rare or two remain.
    Ordered columns merge into the less frequent neighbour (the preceding
    one on ties); unordered columns into the most frequent category.
    """
    groups = [[c] for c in categories]
    labels = list(categories)
    cnt = [float(c) for c in counts]
    total = sum(cnt)
    if total <= 0:
        return {}
    while len(labels) > 2:
        frac = [c / total for c in cnt]
        rare = [i for i, f in enumerate(frac) if f < rare_below]
        if not rare:
            break
        i = min(rare, key=lambda k: (cnt[k], k))
        if ordered:
            nbrs = [k for k in (i - 1, i + 1) if 0 <= k < len(labels)]
            j = min(nbrs, key=lambda k: (cnt[k], k))
            lo, hi = min(i, j), max(i, j)
            new = merged_label(labels[lo], labels[hi])
            groups[lo:hi + 1] = [groups[lo] + groups[hi]]
            labels[lo:hi + 1] = [new]
            cnt[lo:hi + 1] = [cnt[lo] + cnt[hi]]
        else:
            others = [k for k in range(len(labels)) if k != i]
            j = max(others, key=lambda k: (cnt[k], -k))
            groups[j] = groups[j] + groups[i]
            cnt[j] += cnt[i]
            del groups[i], labels[i], cnt[i]
    out = {}
    for lab, members in zip(labels, groups):
        for m in members:
            if m != lab:
                out[m] = lab
    return out


# -- planning --------------------------------------------------------------


def plan_prep(table: Table, rows=None) -> PrepPlan:
    """Decide every predictor column's action from its missingness and levels.

    Fractions are computed over ``rows`` when given (e.g. training rows).
    """
    sub = table if rows is None else table.take(rows)
    plans = {}
    for s in sub.specs:
        if s.domain == "outcome":
            continue
        miss = sub.mask(s.name)
        m = float(miss.mean()) if sub.n_rows else 0.0
        cp = ColumnPlan(s.name, s.kind, m, missing_action(m, s.kind))
        if s.is_categorical and cp.action != "drop_missing_gt_15":
            v = sub.column(s.name)
            obs = v[v >= 0]
            counts = np.bincount(obs, minlength=len(s.categories)).astype(np.float64)
            if obs.size:
                top = float(counts.max() / obs.size)
                cp.dominant_fraction = top
                if top >= DOMINANT_AT:
                    cp.rebalance = "drop_dominant_98"
                else:
                    mm = plan_merges(s.categories, counts, s.ordered)
                    if mm:
                        cp.rebalance = "merge_rare_2"
                        cp.merge_map = mm
                    elif len(s.categories) == 2:
                        cp.rare_kept = [c for c, k in zip(s.categories, counts) if k / obs.size < RARE_BELOW]
        plans[s.name] = cp
    return PrepPlan(plans, table.outcome_column)


# -- applying --------------------------------------------------------------


def apply_rebalance(table: Table, plan: PrepPlan) -> Table:
    """Drop planned columns and recode merged categories (missing stays missing)."""
    out = table.drop(plan.dropped())
    for cp in plan.columns.values():
        if cp.rebalance != "merge_rare_2" or cp.name not in out:
            continue
        s = out.spec(cp.name)
        new_cats = []
        for c in s.categories:
            t = cp.merge_map.get(c, c)
            if t not in new_cats:
                new_cats.append(t)
        lut = np.array([new_cats.index(cp.merge_map.get(c, c)) for c in s.categories] + [-1])
        v = out.column(cp.name)
        spec = ColumnSpec(s.name, s.domain, s.kind, tuple(new_cats), s.ordered)
        out = out.replace(cp.name, lut[v], spec)
    return out


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(v.size - 1) // 2])


def mode_index(codes, categories) -> int:
    """Most frequent category index; ties go to the lexicographically first label."""
    counts = np.bincount(codes, minlength=len(categories))
    best = counts.max()
    return min((i for i in range(len(categories)) if counts[i] == best), key=lambda i: categories[i])


@dataclass
class FillRecord:
    column: str
    action: str
    value: str
    n_filled: int


def _fill_value(table: Table, name, ref_rows):
    s = table.spec(name)
    v = table.column(name)
    ref = v if ref_rows is None else v[ref_rows]
    if s.is_categorical:
        obs = ref[ref >= 0]
        if obs.size == 0:
            raise AllMissingColumn(f"column {name!r} has no observed values", column=name)
        return mode_index(obs, s.categories)
    obs = ref[~np.isnan(ref)]
    if obs.size == 0:
        raise AllMissingColumn(f"column {name!r} has no observed values", column=name)
    return lower_median(obs)


def _fill_label(table, name, value):
    s = table.spec(name)
    return s.categories[value] if s.is_categorical else repr(float(value))


def impute_simple(table: Table, plan: PrepPlan, rows=None, actions=("impute_median", "impute_mode"),
                  records: Optional[list] = None) -> Table:
    """Fill planned columns with the median (lower middle value) or mode.

    Statistics come from ``rows`` when given, otherwise from all rows.
    """
    out = table
    for cp in plan.columns.values():
        if cp.action not in actions or cp.name not in out:
            continue
        val = _fill_value(out, cp.name, rows)
        miss = out.mask(cp.name)
        v = np.array(out.column(cp.name))
        v[miss] = val
        if records is not None:
            records.append(FillRecord(cp.name, cp.action, _fill_label(out, cp.name, val), int(miss.sum())))
        out = out.replace(cp.name, v)
    return out


@dataclass
class ForestImputeParams:
    max_iter: int = 10
    n_trees: int = 50
    max_depth: int = 8
    min_samples_leaf: int = 3
    feature_fraction: float = 0.5
    seed: int = 0
    n_bins: int = 256


def _design(table: Table, names):
    # categorical predictors enter as their integer codes
    return np.column_stack([table.column(n).astype(np.float64) for n in names])


def impute_forest(table: Table, plan: PrepPlan, params: Optional[ForestImputeParams] = None, rows=None,
                  history: Optional[list] = None) -> Table:
    """Iterative forest imputation of the planned columns.

    Targets start from their median/mode and are revisited in ascending
    missingness. Each visit fits a forest (mean-leaf regression or Gini
    classification) on the column's observed rows, using every other
    predictor column, and overwrites the column's missing cells. Iteration
    stops at ``max_iter`` or once the change between successive imputations
    grows for both column kinds, in which case the previous imputation is
    returned. Observed cells are never modified.
    """
    params = params or ForestImputeParams()
    targets = [cp for cp in plan.columns.values() if cp.action == "impute_forest" and cp.name in table]
    if not targets:
        return table
    predictors = table.predictor_names()
    if len(predictors) < 2:
        raise NoPredictorsAvailable("forest imputation needs at least one other column")
    targets.sort(key=lambda cp: (cp.missing_fraction, predictors.index(cp.name)))
    masks = {cp.name: table.mask(cp.name) for cp in targets}
    fit_mask = np.ones(table.n_rows, dtype=bool)
    if rows is not None:
        fit_mask[:] = False
        fit_mask[np.asarray(rows)] = True

    # initial fill from the fitting rows
    init_plan = PrepPlan({cp.name: ColumnPlan(cp.name, cp.kind, cp.missing_fraction,
                                              "impute_mode" if cp.kind == "categorical" else "impute_median")
                          for cp in targets})
    current = impute_simple(table, init_plan, rows)
    others = [n for n in predictors if n not in masks and table.mask(n).any()]
    if others:
        # predictors with leftover gaps are simply filled for use as inputs only
        tmp_plan = PrepPlan({n: ColumnPlan(n, table.spec(n).kind, 0.0,
                                           "impute_mode" if table.spec(n).is_categorical else "impute_median")
                             for n in others})
        current = impute_simple(current, tmp_plan, rows)

    seeds = np.random.SeedSequence(params.seed).spawn(params.max_iter)
    prev_change = {"continuous": np.inf, "categorical": np.inf}
    for it in range(params.max_iter):
        col_seeds = seeds[it].generate_state(len(targets))
        old = current
        for cp, cs in zip(targets, col_seeds):
            name = cp.name
            miss = masks[name]
            if not miss.any():
                continue
            preds = [n for n in predictors if n != name]
            X = _design(current, preds)
            train = fit_mask & ~miss
            v = np.array(current.column(name))
            fp = ForestParams(n_trees=params.n_trees, max_depth=params.max_depth,
                              min_samples_leaf=params.min_samples_leaf,
                              feature_fraction=params.feature_fraction, seed=int(cs),
                              n_bins=params.n_bins)
            s = current.spec(name)
            if s.is_categorical:
                model = fit_forest_classifier(X[train], v[train], len(s.categories), fp)
                if model.task == "binary":
                    fill = (model.predict_raw(X[miss])[:, 0] >= 0.5).astype(np.int64)
                else:
                    fill = model.predict(X[miss])
            else:
                fill = fit_forest_regressor(X[train], v[train], fp).predict(X[miss])
            v[miss] = fill
            current = current.replace(name, v)
        change = {"continuous": 0.0, "categorical": 0.0}
        num = {"continuous": 0.0, "categorical": 0.0}
        den = {"continuous": 0.0, "categorical": 0.0}
        for cp in targets:
            m = masks[cp.name]
            a, b = current.column(cp.name)[m], old.column(cp.name)[m]
            if cp.kind == "categorical":
                num["categorical"] += float(np.sum(a != b))
                den["categorical"] += float(m.sum())
            else:
                num["continuous"] += float(np.sum((a - b) ** 2))
                den["continuous"] += float(np.sum(a.astype(np.float64) ** 2))
        for k in change:
            change[k] = num[k] / den[k] if den[k] > 0 else 0.0
        if history is not None:
            history.append(dict(change))
        kinds = [k for k in change if den[k] > 0]
        if it > 0 and all(change[k] > prev_change[k] for k in kinds):
            return old
        prev_change = change
    return current


@dataclass
class PrepResult:
    table: Table
    plan: PrepPlan
    fills: List[FillRecord]
    forest_history: List[dict]

    def summary_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["column", "missing_fraction", "action", "rebalance", "detail"])
        fills = {f.column: f for f in self.fills}
        for cp in self.plan.columns.values():
            detail = ""
            if cp.rebalance == "merge_rare_2":
                detail = ";".join(f"{k}->{v}" for k, v in cp.merge_map.items())
            elif cp.rebalance == "drop_dominant_98":
                detail = f"dominant={cp.dominant_fraction!r}"
            elif cp.name in fills:
                detail = f"fill={fills[cp.name].value}"
            w.writerow([cp.name, repr(cp.missing_fraction), cp.action, cp.rebalance, detail])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def run_prep(table: Table, plan: Optional[PrepPlan] = None, rows=None,
             forest_params: Optional[ForestImputeParams] = None) -> PrepResult:
    """Plan (unless given), rebalance, then impute simply and by forest."""
    plan = plan or plan_prep(table, rows)
    t = apply_rebalance(table, plan)
    fills: List[FillRecord] = []
    t = impute_simple(t, plan, rows, records=fills)
    hist: List[dict] = []
    t = impute_forest(t, plan, forest_params, rows, history=hist)
    return PrepResult(t, plan, fills, hist)
