"""Domain variable sets and the four correlation/test-based selection workflows.

``select_vif`` and ``select_spearman`` act on encoded features;
``select_univariate`` and ``select_hybrid`` act on raw table columns.
Every method returns a :class:`SelectionReport` whose kept and dropped
entries partition the input features.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import stats
from .data import EncodedMatrix, Table, one_hot_encode
from .errors import EmptyDomain, LosmlError, MissingCellsPresent, NumericError, TooFewRows

PREDICTOR_DOMAINS = ("patient", "clinical", "system")
METHODS = ("vif", "spearman", "univariate", "hybrid")

HYBRID_THRESHOLDS = {"spearman": 0.7, "cramers_v": 0.6, "point_biserial": 0.3, "corr_ratio": 0.4}


# -- variable sets ---------------------------------------------------------


@dataclass(frozen=True)
class VariableSet:
    name: str
    domains: tuple
    columns: tuple


def build_variable_sets(table: Table, baseline_columns: Optional[Sequence[str]] = None) -> Dict[str, VariableSet]:
    """The seven non-empty unions of the three predictor domains, plus ``baseline``.

    Sets are named by their domains joined with ``+``; the union of all three
    is called ``all``. ``baseline`` is an explicit column list (empty when
    not supplied).
    """
    by_domain = {d: [s.name for s in table.specs if s.domain == d] for d in PREDICTOR_DOMAINS}
    for d, cols in by_domain.items():
        if not cols:
            raise EmptyDomain(f"no columns tagged {d!r}", domain=d)
    sets = {}
    for r in (1, 2, 3):
        for combo in itertools.combinations(PREDICTOR_DOMAINS, r):
            name = "all" if r == 3 else "+".join(combo)
            cols = tuple(s.name for s in table.specs if s.domain in combo)
            sets[name] = VariableSet(name, combo, cols)
    base = tuple(baseline_columns or ())
    for c in base:
        table.spec(c)  # raises UnknownColumn
    sets["baseline"] = VariableSet("baseline", (), base)
    return sets


# -- reports ---------------------------------------------------------------


@dataclass(frozen=True)
class DropRecord:
    feature: str
    reason: str
    statistic: float
    threshold: float
    partner: str = ""


@dataclass
class SelectionReport:
    method: str
    kept: List[str]
    dropped: List[DropRecord]
    runtime_seconds: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def input_features(self) -> List[str]:
        return self.params.get("input_features", self.kept + [d.feature for d in self.dropped])

    def to_rows(self):
        rows = [(f, "kept", "", "", "", "") for f in self.kept]
        for d in self.dropped:
            rows.append((d.feature, "dropped", d.reason, repr(float(d.statistic)), repr(float(d.threshold)), d.partner))
        order = {f: i for i, f in enumerate(self.input_features)}
        rows.sort(key=lambda r: order.get(r[0], len(order)))
        return rows

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "status", "reason", "statistic", "threshold", "partner"])
        w.writerows(self.to_rows())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self, include_runtime: bool = True):
        d = {
            "method": self.method,
            "kept": list(self.kept),
            "dropped": [
                {"feature": r.feature, "reason": r.reason, "statistic": repr(float(r.statistic)),
                 "threshold": repr(float(r.threshold)), "partner": r.partner}
                for r in self.dropped
            ],
            "params": {k: v for k, v in self.params.items() if k != "input_features"},
        }
        if include_runtime:
            d["runtime_seconds"] = self.runtime_seconds
        return d

    def to_json(self, path=None, include_runtime: bool = True) -> str:
        text = json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["method"],
            list(d["kept"]),
            [DropRecord(r["feature"], r["reason"], float(r["statistic"]), float(r["threshold"]),
                        r.get("partner", "")) for r in d["dropped"]],
            float(d.get("runtime_seconds", 0.0)),
            dict(d.get("params", {})),
        )


def _constant(v) -> bool:
    v = np.asarray(v)
    return v.size == 0 or bool(np.all(v == v[0]))


# -- encoded-feature methods ----------------------------------------------


def select_vif(X: EncodedMatrix, threshold: float = 5.0) -> SelectionReport:
    """Iteratively remove the feature with the largest VIF while it exceeds ``threshold``.

    Ties on the maximum go to the lexicographically first feature name.
    Constant features are removed first with reason ``degenerate``.
    """
    t0 = time.perf_counter()
    names = list(X.feature_names)
    M = np.asarray(X.X, dtype=np.float64)
    n, p = M.shape
    if n <= p:
        raise TooFewRows(f"VIF needs more rows than features ({n} <= {p})")
    dropped = []
    alive = []
    for j, name in enumerate(names):
        if _constant(M[:, j]):
            dropped.append(DropRecord(name, "degenerate", float("nan"), threshold))
        else:
            alive.append(j)
    while len(alive) > 1:
        v = stats.vif_all(M[:, alive])
        top = float(np.max(v))
        if not top > threshold:
            break
        cands = [alive[i] for i in np.flatnonzero(v == top)]
        j = min(cands, key=lambda c: names[c])
        dropped.append(DropRecord(names[j], "vif", top, threshold))
        alive.remove(j)
    kept = [names[j] for j in alive]
    return SelectionReport("vif", kept, dropped, time.perf_counter() - t0,
                           {"threshold": threshold, "input_features": names})


def _target_strength(x, y) -> float:
    if _constant(x):
        return 0.0
    return abs(stats.point_biserial(y, x))


def _pairs_above(R, threshold):
    iu, ju = np.triu_indices(R.shape[0], k=1)
    a = np.abs(R[iu, ju])
    hit = np.flatnonzero(a > threshold)
    # strongest pairs first; equal strengths keep index order
    order = hit[np.argsort(-a[hit], kind="stable")]
    return [(int(iu[k]), int(ju[k]), float(a[k])) for k in order]


def select_spearman(X: EncodedMatrix, y, threshold: float = 0.7) -> SelectionReport:
    """Drop one member of every feature pair with ``|rho| > threshold``.

    Pairs are visited strongest first. The member with the weaker absolute
    point-biserial correlation with ``y`` is dropped (the later feature on a
    tie); pairs touching an already-dropped feature are skipped.
    """
    t0 = time.perf_counter()
    names = list(X.feature_names)
    M = np.asarray(X.X, dtype=np.float64)
    y = np.asarray(y).ravel()
    dropped = []
    alive = []
    for j, name in enumerate(names):
        if _constant(M[:, j]):
            dropped.append(DropRecord(name, "degenerate", float("nan"), threshold))
        else:
            alive.append(j)
    R = stats.spearman_matrix(M[:, alive]) if alive else np.zeros((0, 0))
    strength = {j: _target_strength(M[:, j], y) for j in alive}
    gone = set()
    for a, b, rho in _pairs_above(R, threshold):
        ja, jb = alive[a], alive[b]
        if ja in gone or jb in gone:
            continue
        loser, winner = (jb, ja) if strength[ja] >= strength[jb] else (ja, jb)
        gone.add(loser)
        dropped.append(DropRecord(names[loser], "spearman", rho, threshold, names[winner]))
    kept = [names[j] for j in alive if j not in gone]
    return SelectionReport("spearman", kept, dropped, time.perf_counter() - t0,
                           {"threshold": threshold, "input_features": names})


# -- raw-column methods ----------------------------------------------------


def _require_complete(table: Table, names):
    for n in names:
        if table.mask(n).any():
            raise MissingCellsPresent(f"column {n!r} has missing cells", column=n)


def _is_degenerate(table: Table, name) -> bool:
    return _constant(table.column(name))


def select_univariate(table: Table, y, alpha: float = 0.05, columns: Optional[Sequence[str]] = None) -> SelectionReport:
    """Keep columns significantly associated with ``y`` (two-sided, p < ``alpha``).

    Categorical columns use the chi-square test of independence on the
    column-by-outcome table; continuous columns use the Mann-Whitney U test
    between the outcome groups.
    """
    t0 = time.perf_counter()
    names = table.predictor_names() if columns is None else list(columns)
    _require_complete(table, names)
    y = np.asarray(y).ravel().astype(np.int64)
    kept, dropped, pvals = [], [], {}
    for name in names:
        v = table.column(name)
        if _is_degenerate(table, name):
            dropped.append(DropRecord(name, "degenerate", float("nan"), alpha))
            continue
        try:
            if table.spec(name).is_categorical:
                res = stats.chi_square_test(stats.contingency(v, y))
            else:
                res = stats.mann_whitney_u(v[y == 0], v[y == 1])
        except NumericError:
            dropped.append(DropRecord(name, "degenerate", float("nan"), alpha))
            continue
        pvals[name] = res.p_value
        if res.p_value < alpha:
            kept.append(name)
        else:
            dropped.append(DropRecord(name, "p_value", res.p_value, alpha))
    return SelectionReport("univariate", kept, dropped, time.perf_counter() - t0,
                           {"alpha": alpha, "input_features": names})


def _cat_target_strength(codes, y) -> float:
    try:
        return stats.cramers_v(codes, y)
    except NumericError:
        return 0.0


def select_hybrid(table: Table, y, thresholds: Optional[dict] = None,
                  columns: Optional[Sequence[str]] = None) -> SelectionReport:
    """Two-stage association filter on raw columns.

    Stage 1 handles same-kind pairs: Spearman for continuous pairs, Cramér's
    V for categorical pairs. Pairs above threshold are visited strongest
    first and the member weaker against ``y`` is dropped (point-biserial for
    continuous, Cramér's V for categorical columns; the later column on a
    tie). Stage 2 handles the surviving mixed pairs: the continuous member
    is dropped when its point-biserial correlation with a two-level column
    or its correlation ratio over a multi-level column crosses threshold.
    """
    t0 = time.perf_counter()
    th = dict(HYBRID_THRESHOLDS)
    th.update(thresholds or {})
    names = table.predictor_names() if columns is None else list(columns)
    _require_complete(table, names)
    y = np.asarray(y).ravel().astype(np.int64)
    dropped = []
    alive = []
    for name in names:
        if _is_degenerate(table, name):
            dropped.append(DropRecord(name, "degenerate", float("nan"), float("nan")))
        else:
            alive.append(name)
    cont = [n for n in alive if not table.spec(n).is_categorical]
    cat = [n for n in alive if table.spec(n).is_categorical]
    order = {n: i for i, n in enumerate(names)}

    strength = {}
    for n in cont:
        strength[n] = _target_strength(table.column(n), y)
    for n in cat:
        strength[n] = _cat_target_strength(table.column(n), y)

    # stage 1: same-kind pairs
    cands = []
    if len(cont) > 1:
        R = stats.spearman_matrix(np.column_stack([table.column(n) for n in cont]))
        for a, b, v in _pairs_above(R, th["spearman"]):
            cands.append((v, order[cont[a]], order[cont[b]], cont[a], cont[b], "spearman", th["spearman"]))
    for a, b in itertools.combinations(range(len(cat)), 2):
        v = stats.cramers_v(table.column(cat[a]), table.column(cat[b]))
        if v > th["cramers_v"]:
            cands.append((v, order[cat[a]], order[cat[b]], cat[a], cat[b], "cramers_v", th["cramers_v"]))
    cands.sort(key=lambda c: (-c[0], min(c[1], c[2]), max(c[1], c[2])))
    gone = set()
    for v, _, _, a, b, reason, t in cands:
        if a in gone or b in gone:
            continue
        first, second = (a, b) if order[a] < order[b] else (b, a)
        loser, winner = (second, first) if strength[first] >= strength[second] else (first, second)
        gone.add(loser)
        dropped.append(DropRecord(loser, reason, v, t, winner))

    # stage 2: continuous vs categorical pairs among survivors
    cont2 = [n for n in cont if n not in gone]
    cat2 = [n for n in cat if n not in gone]
    mixed = []
    for c in cont2:
        x = table.column(c)
        for k in cat2:
            g = table.column(k)
            levels = np.unique(g)
            if levels.size < 2:
                continue
            if levels.size == 2:
                b = (g == levels[1]).astype(np.float64)
                v = abs(stats.pearson(b, x))
                reason, t = "point_biserial", th["point_biserial"]
            else:
                try:
                    v = stats.correlation_ratio(g, x)
                except NumericError:
                    continue
                reason, t = "corr_ratio", th["corr_ratio"]
            if v > t:
                mixed.append((v, order[c], order[k], c, k, reason, t))
    mixed.sort(key=lambda m: (-m[0], m[1], m[2]))
    for v, _, _, c, k, reason, t in mixed:
        if c in gone:
            continue
        gone.add(c)
        dropped.append(DropRecord(c, reason, v, t, k))

    kept = [n for n in alive if n not in gone]
    return SelectionReport("hybrid", kept, dropped, time.perf_counter() - t0,
                           {"thresholds": th, "input_features": names})


# -- dispatch and benchmarking --------------------------------------------


def run_selection(method: str, table: Table, y, columns: Optional[Sequence[str]] = None, **kw) -> SelectionReport:
    """Run one method on ``table`` (restricted to ``columns``) with its own encoding."""
    if method not in METHODS:
        raise LosmlError(f"unknown selection method {method!r}; expected one of {METHODS}")
    names = table.predictor_names() if columns is None else list(columns)
    if method == "vif":
        return select_vif(one_hot_encode(table, "drop_first", columns=names), **kw)
    if method == "spearman":
        return select_spearman(one_hot_encode(table, "full", columns=names), y, **kw)
    if method == "univariate":
        return select_univariate(table, y, columns=names, **kw)
    return select_hybrid(table, y, columns=names, **kw)


def kept_design(table: Table, report: Optional[SelectionReport], columns: Sequence[str]) -> EncodedMatrix:
    """Design matrix restricted to what ``report`` kept.

    Column-level methods keep whole source columns (full one-hot);
    feature-level methods keep indicators of the encoding they were run on.
    """
    if report is None:
        return one_hot_encode(table, "full", columns=list(columns))
    if report.method in ("univariate", "hybrid"):
        return one_hot_encode(table, "full", columns=list(report.kept))
    mode = "drop_first" if report.method == "vif" else "full"
    return one_hot_encode(table, mode, columns=list(columns)).subset(report.kept)


def predictor_count(report: Optional[SelectionReport], table: Table, columns: Sequence[str]) -> int:
    """Number of source columns that keep at least one feature."""
    if report is None:
        return len(columns)
    if report.method in ("univariate", "hybrid"):
        return len(report.kept)
    return len(set(kept_design(table, report, columns).source_map.values()))


@dataclass
class BenchmarkRow:
    method: str
    n_predictors: int
    n_features: int
    train_seconds: float
    time_difference_pct: Optional[float]
    test_auc: float


def benchmark_selection(table: Table, y, methods: Sequence[str], split, columns: Optional[Sequence[str]] = None,
                        logistic_params=None, reports: Optional[Dict[str, SelectionReport]] = None) -> List[BenchmarkRow]:
    """Compare selection methods by downstream logistic-regression training time and AUC.

    The first row is the unselected baseline. Every method trains the same
    logistic model (same hyperparameters) on the same split; time is model
    training time only. ``reports`` may supply precomputed selections.
    """
    from .evaluation import auc
    from .learners.logistic import LogisticParams, fit_logistic

    if not methods:
        raise LosmlError("benchmark needs at least one method")
    names = table.predictor_names() if columns is None else list(columns)
    y = np.asarray(y).ravel().astype(np.int64)
    params = logistic_params or LogisticParams()
    reports = dict(reports or {})
    rows = []
    base_time = None
    for method in ["baseline"] + list(methods):
        rep = None
        if method != "baseline":
            rep = reports.get(method) or run_selection(method, table.take(split.train), y[split.train], names)
        em = kept_design(table, rep, names)
        t0 = time.perf_counter()
        model = fit_logistic(em.X[split.train], y[split.train], params)
        dt = time.perf_counter() - t0
        score = auc(model.predict_proba(em.X[split.test])[:, 1], y[split.test])
        if base_time is None:
            base_time, diff = dt, None
        else:
            diff = 100.0 * (dt - base_time) / base_time if base_time > 0 else 0.0
        rows.append(BenchmarkRow(method, predictor_count(rep, table, names), em.n_features, dt, diff, score))
    return rows


def benchmark_csv(rows: Sequence[BenchmarkRow], path=None, include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n_predictors", "n_features", "train_seconds", "time_difference_pct", "test_auc"])
    for r in rows:
        if include_timing:
            secs = f"{r.train_seconds:.3f}"
            diff = "N.A." if r.time_difference_pct is None else f"{r.time_difference_pct:.1f}"
        else:
            secs = "suppressed"
            diff = "N.A." if r.time_difference_pct is None else "suppressed"
        w.writerow([r.method, r.n_predictors, r.n_features, secs, diff, f"{r.test_auc:.3f}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
