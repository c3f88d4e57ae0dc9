"""Command-line front end: synth | prep | select | train | evaluate | compare | explain | pipeline.

Every stage reads its inputs from, and writes its artifacts to, one run
directory ``<output_dir>/<run_id>/``::

    data/      synthetic input (when generated from a named spec)
    prep/      prepped table, plan, split and labels
    select/    selection reports and the method comparison table
    model/     model bundle, logistic baseline, search log
    eval/      metrics, ROC/calibration points, comparison
    explain/   SHAP matrix, summary table, beeswarm points
    plots/     roc.svg, calibration.svg, beeswarm.svg
    manifest.json

All randomness derives from the config's master seed. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric failure; errors are written to
stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import plots
from .data import (
    OutcomeSpec,
    SplitIndices,
    Table,
    dichotomize_outcome,
    load_csv,
    load_schema,
    save_schema,
    stratified_split,
    write_csv,
)
from .ensemble import (
    BASE_KINDS,
    DEFAULT_BASE_PARAMS,
    MODEL_KINDS,
    StackedModel,
    default_search_space,
    fit_model,
    fit_stacking,
    load_bundle,
    positive_proba,
    random_search,
    save_bundle,
)
from .errors import ConfigError, LosmlError
from .evaluation import (
    bootstrap_compare,
    calibration_curve,
    epv,
    evaluate_scores,
    repeated_stratified_cv,
    roc_points,
)
from .explain import explain_rows, sample_background, shap_summarize
from .featsel import (
    METHODS,
    SelectionReport,
    benchmark_csv,
    benchmark_selection,
    build_variable_sets,
    kept_design,
    predictor_count,
    run_selection,
)
from .learners import LogisticParams, fit_logistic
from .prep import ForestImputeParams, run_prep
from .synth import default_specs, generate, save_truth

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST_VERSION = 1
STAGES = ("synth", "prep", "select", "train", "evaluate", "compare", "explain")
SUPPRESSED = "suppressed"
ENV_OUT_DIR = "LOSML_OUT_DIR"
ENV_THREADS = "LOSML_THREADS"  # read by losml.__main__ before numpy loads


@dataclass
class RunConfig:
    """Everything a run depends on; a run is reproducible from this alone."""

    spec: Optional[str] = None  # named synthetic spec, used when no data file is given
    data: Optional[str] = None
    schema: Optional[str] = None
    outcome_column: str = "los_days"
    outcome_percentile: float = 0.75
    seed: int = 0
    train_fraction: float = 0.8
    impute: dict = field(default_factory=lambda: {
        "max_iter": 4, "n_trees": 10, "max_depth": 6, "min_samples_leaf": 3,
        "feature_fraction": 0.3, "n_bins": 64})
    variable_set: str = "all"
    select: str = "univariate"  # a selection method or "none"
    benchmark_methods: List[str] = field(default_factory=lambda: list(METHODS))
    model: str = "stacking"  # stacking or any single model kind
    search_iter: int = 0  # random-search configurations per model; 0 uses the defaults
    k_oof: int = 5
    meta_input_arity: int = 1
    threshold: float = 0.5
    cv_k: int = 5
    cv_repeats: int = 5
    cv_model: str = "logistic"  # "logistic" or "model"
    n_boot: int = 2000
    compare_boot: int = 5000
    calibration_bins: int = 10
    shap_background: int = 50
    shap_rows: int = 20
    shap_permutations: int = 10
    shap_boot: int = 1000
    shap_top: int = 15
    output_dir: str = "out"
    run_id: Optional[str] = None
    suppress_volatile: bool = False

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}", keys=extra)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.data is None and self.spec is None:
            raise ConfigError("either a data file or a synthetic spec name is required")
        if self.data is not None and self.schema is None:
            raise ConfigError("a data file needs a schema file")
        if self.spec is not None and self.data is None and self.spec not in default_specs():
            raise ConfigError(f"unknown spec {self.spec!r}; expected one of {sorted(default_specs())}")
        if self.select != "none" and self.select not in METHODS:
            raise ConfigError(f"unknown selection method {self.select!r}")
        if self.model != "stacking" and self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.cv_model not in ("logistic", "model"):
            raise ConfigError("cv_model must be 'logistic' or 'model'")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.meta_input_arity not in (1, len(BASE_KINDS)):
            raise ConfigError(f"meta_input_arity must be 1 or {len(BASE_KINDS)}")
        bad = [m for m in self.benchmark_methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown benchmark methods {bad}")
        for k in ("search_iter", "cv_repeats"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be non-negative")

    @property
    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        source = self.spec if self.data is None else Path(self.data).stem
        return f"{source}-seed{self.seed}"

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.resolved_run_id

    def stage_seed(self, stage: str) -> int:
        """Sub-seed of ``stage``, derived from the master seed and the stage name."""
        ss = np.random.SeedSequence([int(self.seed), zlib.crc32(stage.encode())])
        return int(ss.generate_state(1)[0])


# -- small I/O helpers -----------------------------------------------------


def _dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path: Path):
    if not path.exists():
        raise FileNotFoundError(2, "missing artifact", str(path))
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_text(text: str, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp(cfg: RunConfig) -> Optional[str]:
    return SUPPRESSED if cfg.suppress_volatile else None


class Run:
    """A run directory plus the bookkeeping the manifest needs."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = cfg.run_dir()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.timings: Dict[str, float] = {}

    def path(self, *parts) -> Path:
        p = self.dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_manifest(self):
        cfg = self.cfg
        mpath = self.dir / "manifest.json"
        old = _load_json(mpath) if mpath.exists() else {}
        artifacts = {}
        for p in sorted(self.dir.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                artifacts[p.relative_to(self.dir).as_posix()] = sha256_file(p)
        config = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "run_id": cfg.resolved_run_id,
            "config": config,
            "seeds": {"master": cfg.seed, **{s: cfg.stage_seed(s) for s in STAGES}},
            "artifacts": artifacts,
            "volatile": ["plots/*.svg (timestamp)", "select/table2.csv (timing)",
                         "select/report_*.json (runtime_seconds)", "manifest.json (timings)"],
        }
        if not cfg.suppress_volatile:
            timings = dict(old.get("timings_seconds", {}))
            timings.update({k: round(v, 3) for k, v in self.timings.items()})
            manifest["timings_seconds"] = timings
        _dump_json(manifest, mpath)
        return manifest


# -- stages ----------------------------------------------------------------


def stage_synth(run: Run, out_dir: Optional[Path] = None):
    """Generate the named spec into ``data/`` (or ``out_dir``)."""
    cfg = run.cfg
    if cfg.spec is None:
        raise ConfigError("synth needs a spec name")
    specs = default_specs(cfg.stage_seed("synth"))
    if cfg.spec not in specs:
        raise ConfigError(f"unknown spec {cfg.spec!r}; expected one of {sorted(specs)}")
    table, truth = generate(specs[cfg.spec])
    d = out_dir or run.dir / "data"
    d.mkdir(parents=True, exist_ok=True)
    write_csv(table, d / "data.csv")
    save_schema(table.specs, d / "schema.json")
    save_truth(truth, d / "truth.json")
    _dump_json(specs[cfg.spec].to_dict(), d / "spec.json")
    return table


def _input_table(run: Run) -> Table:
    cfg = run.cfg
    if cfg.data is not None:
        for p in (cfg.schema, cfg.data):
            if not Path(p).exists():
                raise FileNotFoundError(2, "input file not found", str(p))
        return load_csv(cfg.data, load_schema(cfg.schema))
    d = run.dir / "data"
    if not (d / "data.csv").exists():
        return stage_synth(run)
    return load_csv(d / "data.csv", load_schema(d / "schema.json"))


def stage_prep(run: Run):
    cfg = run.cfg
    table = _input_table(run)
    if cfg.outcome_column not in table:
        raise ConfigError(f"outcome column {cfg.outcome_column!r} not in the data", column=cfg.outcome_column)
    labels, threshold = dichotomize_outcome(table, OutcomeSpec(cfg.outcome_column, cfg.outcome_percentile))
    split = stratified_split(labels, cfg.train_fraction, cfg.stage_seed("split"))
    fp = ForestImputeParams(**{**cfg.impute, "seed": cfg.stage_seed("prep")})
    res = run_prep(table, None, split.train, fp)
    write_csv(res.table, run.path("prep", "prepped.csv"))
    save_schema(res.table.specs, run.path("prep", "schema.json"))
    _write_text(res.plan.to_json() + "\n", run.path("prep", "plan.json"))
    res.summary_csv(run.path("prep", "summary.csv"))
    _dump_json({
        "outcome_column": cfg.outcome_column,
        "percentile": cfg.outcome_percentile,
        "threshold_days": threshold,
        "n_rows": int(labels.size),
        "n_events": int(labels.sum()),
        "split_seed": split.seed,
        "train_fraction": split.train_fraction,
        "train": split.train.tolist(),
        "test": split.test.tolist(),
        "labels": labels.tolist(),
        "forest_history": [{k: repr(float(v)) for k, v in h.items()} for h in res.forest_history],
    }, run.path("prep", "split.json"))
    return res


def _load_prepped(run: Run):
    d = run.dir / "prep"
    if not (d / "prepped.csv").exists():
        raise FileNotFoundError(2, "prep artifacts missing; run the prep stage first", str(d / "prepped.csv"))
    table = load_csv(d / "prepped.csv", load_schema(d / "schema.json"))
    info = _load_json(d / "split.json")
    split = SplitIndices(np.asarray(info["train"], dtype=np.int64), np.asarray(info["test"], dtype=np.int64),
                         int(info["split_seed"]), float(info["train_fraction"]))
    y = np.asarray(info["labels"], dtype=np.int64)
    return table, split, y, info


def _variable_columns(cfg: RunConfig, table: Table) -> List[str]:
    sets = build_variable_sets(table)
    if cfg.variable_set not in sets:
        raise ConfigError(f"unknown variable set {cfg.variable_set!r}; expected one of {sorted(sets)}")
    cols = list(sets[cfg.variable_set].columns)
    if not cols:
        raise ConfigError(f"variable set {cfg.variable_set!r} is empty")
    return cols


def stage_select(run: Run):
    cfg = run.cfg
    table, split, y, _ = _load_prepped(run)
    cols = _variable_columns(cfg, table)
    methods = list(cfg.benchmark_methods)
    if cfg.select != "none" and cfg.select not in methods:
        methods.append(cfg.select)
    train = table.take(split.train)
    reports = {}
    for m in methods:
        reports[m] = run_selection(m, train, y[split.train], cols)
        reports[m].to_json(run.path("select", f"report_{m}.json"), include_runtime=not cfg.suppress_volatile)
        reports[m].to_csv(run.path("select", f"report_{m}.csv"))
    rows = benchmark_selection(table, y, methods, split, cols, reports=reports)
    benchmark_csv(rows, run.path("select", "table2.csv"), include_timing=not cfg.suppress_volatile)
    _dump_json({"method": cfg.select, "variable_set": cfg.variable_set, "columns": cols},
               run.path("select", "selected.json"))
    return reports.get(cfg.select)


def _design(run: Run):
    cfg = run.cfg
    table, split, y, info = _load_prepped(run)
    sel = _load_json(run.dir / "select" / "selected.json")
    cols = sel["columns"]
    report = None
    if sel["method"] != "none":
        report = SelectionReport.from_dict(_load_json(run.dir / "select" / f"report_{sel['method']}.json"))
    em = kept_design(table, report, cols)
    return table, split, y, em, report, cols, info


def stage_train(run: Run):
    cfg = run.cfg
    _, split, y, em, _, _, _ = _design(run)
    X, ytr = em.X[split.train], y[split.train]
    seed = cfg.stage_seed("train")
    kinds = BASE_KINDS if cfg.model == "stacking" else (cfg.model,)
    params = {k: dict(DEFAULT_BASE_PARAMS.get(k, {})) for k in kinds}
    searches = {}
    if cfg.search_iter > 0:
        for i, k in enumerate(kinds):
            space = default_search_space(cfg.search_iter, seed + i)
            res = random_search(k, space, X, ytr)
            params[k] = res.best_params
            searches[k] = res.to_dict()
    if cfg.model == "stacking":
        model = fit_stacking(X, ytr, params, cfg.k_oof, seed, cfg.meta_input_arity)
    else:
        model = fit_model(cfg.model, X, ytr, params[cfg.model], seed=seed)
    baseline = fit_logistic(X, ytr, LogisticParams())
    save_bundle(model, run.path("model", "model.json"))
    save_bundle(baseline, run.path("model", "baseline.json"))
    _dump_json({"model": cfg.model, "feature_names": list(em.feature_names), "params": params,
                "search_iter": cfg.search_iter, "baseline_converged": bool(baseline.converged)},
               run.path("model", "design.json"))
    _dump_json(searches, run.path("model", "search.json"))
    return model, baseline


def _predict(model, X) -> np.ndarray:
    if isinstance(model, StackedModel):
        return model.predict_proba(X)[:, 1]
    return positive_proba(model, X)


def _test_scores(run: Run):
    _, split, y, em, report, cols, info = _design(run)
    model = load_bundle(run.dir / "model" / "model.json")
    baseline = load_bundle(run.dir / "model" / "baseline.json")
    Xte = em.X[split.test]
    return model, baseline, em, split, y, Xte, report, cols, info


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def stage_evaluate(run: Run):
    cfg = run.cfg
    model, baseline, em, split, y, Xte, report, cols, info = _test_scores(run)
    yte = y[split.test]
    seed = cfg.stage_seed("evaluate")
    scores = {cfg.model: _predict(model, Xte), "logistic_baseline": _predict(baseline, Xte)}
    table, _, _, _ = _load_prepped(run)
    n_pred = predictor_count(report, table, cols)
    ev = epv(int(split.train.size), int(y[split.train].sum()), n_pred)
    metrics, t3_rows, roc_rows, cal_rows, roc_curves, cal_curves = {}, [], [], [], [], []
    for name, s in scores.items():
        m = evaluate_scores(s, yte, cfg.threshold, cfg.n_boot, seed)
        metrics[name] = {k: (repr(float(v)) if isinstance(v, float) else v) for k, v in m.to_dict().items()}
        t3_rows.append([name, cfg.variable_set, cfg.select, int(split.train.size), n_pred, _fmt(ev.paper_ratio),
                        _fmt(ev.events_ratio), f"{m.auc:.3f} ({m.auc_ci_low:.3f}-{m.auc_ci_high:.3f})",
                        _fmt(m.accuracy), _fmt(m.sensitivity), _fmt(m.specificity), _fmt(m.weighted_f1)])
        fpr, tpr, thr = roc_points(s, yte)
        roc_rows += [[name, repr(float(a)), repr(float(b)), repr(float(c))] for a, b, c in zip(fpr, tpr, thr)]
        roc_curves.append((name, fpr, tpr, m.auc))
        cc = calibration_curve(s, yte, cfg.calibration_bins)
        cal_rows += [[name, int(b), repr(float(p)), repr(float(o)), int(c)]
                     for b, p, o, c in zip(cc.bins, cc.mean_predicted, cc.observed, cc.counts)]
        cal_curves.append((name, cc.mean_predicted, cc.observed))
    _dump_json({"metrics": metrics, "epv": {"paper_ratio": repr(ev.paper_ratio), "events_ratio": repr(ev.events_ratio),
                                            "adequate": ev.adequate, "n_predictors": n_pred},
                "threshold_days": info["threshold_days"], "n_test": int(split.test.size)},
               run.path("eval", "metrics.json"))
    _write_text(_rows_csv(["model", "variable_set", "selection", "n_train", "n_predictors", "epv_rows_per_predictor",
                           "events_per_predictor", "test_auc_95ci", "accuracy", "sensitivity", "specificity",
                           "weighted_f1"], t3_rows), run.path("eval", "table3.csv"))
    _write_text(_rows_csv(["model", "fpr", "tpr", "threshold"], roc_rows), run.path("eval", "roc.csv"))
    _write_text(_rows_csv(["model", "bin", "mean_predicted", "observed", "count"], cal_rows),
                run.path("eval", "calibration.csv"))
    _write_text(_rows_csv(["row", "label"] + list(scores),
                          [[int(r), int(l)] + [repr(float(scores[k][i])) for k in scores]
                           for i, (r, l) in enumerate(zip(split.test, yte))]),
                run.path("eval", "predictions.csv"))
    if cfg.cv_repeats > 0:
        Xtr, ytr = em.X[split.train], y[split.train]
        if cfg.cv_model == "logistic":
            fit = lambda X, yy, s: fit_logistic(X, yy, LogisticParams())
        elif cfg.model == "stacking":
            params = _load_json(run.dir / "model" / "design.json")["params"]
            fit = lambda X, yy, s: fit_stacking(X, yy, params, cfg.k_oof, s, cfg.meta_input_arity)
        else:
            params = _load_json(run.dir / "model" / "design.json")["params"][cfg.model]
            fit = lambda X, yy, s: fit_model(cfg.model, X, yy, params, seed=s)
        cv = repeated_stratified_cv(fit, Xtr, ytr, cfg.cv_k, cfg.cv_repeats, seed)
        cv.to_csv(run.path("eval", "cv.csv"))
    ts = _timestamp(cfg)
    plots.roc_svg(roc_curves, run.path("plots", "roc.svg"), ts)
    plots.calibration_svg(cal_curves, run.path("plots", "calibration.svg"), ts)
    return metrics


def stage_compare(run: Run, a: str = "model", b: str = "baseline"):
    cfg = run.cfg
    model, baseline, _, split, y, Xte, _, _, _ = _test_scores(run)
    pick = {"model": model, "baseline": baseline}
    for side in (a, b):
        if side not in pick:
            raise ConfigError(f"compare operands must be 'model' or 'baseline', got {side!r}")
    sa, sb = _predict(pick[a], Xte), _predict(pick[b], Xte)
    res = bootstrap_compare(sa, sb, y[split.test], cfg.compare_boot, cfg.stage_seed("compare"))
    out = {"a": a, "b": b, **{k: (repr(float(v)) if isinstance(v, float) else v) for k, v in res.to_dict().items()}}
    name = "comparison.json" if (a, b) == ("model", "baseline") else f"comparison_{a}_vs_{b}.json"
    _dump_json(out, run.path("eval", name))
    return res


def stage_explain(run: Run):
    cfg = run.cfg
    model, _, em, split, y, _, _, _, _ = _test_scores(run)
    seed = cfg.stage_seed("explain")
    bg_seed, row_seed, perm_seed, boot_seed = [int(s.generate_state(1)[0])
                                               for s in np.random.SeedSequence(seed).spawn(4)]
    Xtr = em.X[split.train]
    bg_idx = sample_background(Xtr, y[split.train], min(cfg.shap_background, split.train.size), bg_seed)
    rng = np.random.default_rng(row_seed)
    n_rows = min(cfg.shap_rows, split.test.size)
    rows = np.sort(rng.choice(split.test, n_rows, replace=False))
    predict = lambda Z: _predict(model, Z)
    mat = explain_rows(predict, em.X[rows], Xtr[bg_idx], em.feature_names, "auto",
                       cfg.shap_permutations, perm_seed, row_index=rows)
    mat.to_csv(run.path("explain", "shap_values.csv"))
    summ = shap_summarize(mat, em.X[rows], cfg.shap_boot, boot_seed)
    summ.to_csv(run.path("explain", "table4.csv"))
    summ.beeswarm_csv(run.path("explain", "beeswarm.csv"))
    _dump_json({"method": mat.method, "n_permutations": mat.n_permutations, "background_size": mat.background_size,
                "base_value": repr(mat.base_value), "rows": rows.tolist(), "note": summ.note},
               run.path("explain", "summary.json"))
    order = np.argsort(summ.rank, kind="stable")
    names = [summ.feature_names[j] for j in order]
    plots.beeswarm_svg(names, summ.beeswarm, cfg.shap_top, run.path("plots", "beeswarm.svg"), _timestamp(cfg))
    return summ


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage in order and return the manifest."""
    run = Run(cfg)
    steps = [("prep", stage_prep), ("select", stage_select), ("train", stage_train),
             ("evaluate", stage_evaluate), ("compare", stage_compare), ("explain", stage_explain)]
    if cfg.data is None:
        steps.insert(0, ("synth", stage_synth))
    for name, fn in steps:
        t0 = time.perf_counter()
        fn(run)
        run.timings[name] = time.perf_counter() - t0
    return run.write_manifest()


# -- argument handling -----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_FLAG_FIELDS = {
    "spec": str, "data": str, "schema": str, "outcome_column": str, "outcome_percentile": float,
    "seed": int, "train_fraction": float, "variable_set": str, "select": str, "model": str,
    "search_iter": int, "k_oof": int, "meta_input_arity": int, "threshold": float, "cv_k": int,
    "cv_repeats": int, "cv_model": str, "n_boot": int, "compare_boot": int, "calibration_bins": int,
    "shap_background": int, "shap_rows": int, "shap_permutations": int, "shap_boot": int,
    "output_dir": str, "run_id": str,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="losml", description="Prolonged length-of-stay modelling pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("synth", "prep", "select", "train", "evaluate", "compare", "explain", "pipeline"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON RunConfig file")
        for f, typ in _FLAG_FIELDS.items():
            sp.add_argument("--" + f.replace("_", "-"), dest=f, type=typ, default=None)
        sp.add_argument("--suppress-volatile", dest="suppress_volatile", action="store_true", default=None,
                        help="replace timestamps and timings by a constant")
        if name == "synth":
            sp.add_argument("--out", help="write the dataset here instead of <run>/data")
        if name == "compare":
            sp.add_argument("--a", default="model", choices=("model", "baseline"))
            sp.add_argument("--b", default="baseline", choices=("model", "baseline"))
    return p


def config_from_args(args, environ=None) -> RunConfig:
    """Defaults, then the config file, then environment overrides, then flags."""
    environ = os.environ if environ is None else environ
    d = {}
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError("config file not found", path=args.config)
        try:
            with open(args.config, encoding="utf-8") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}", path=args.config) from None
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object", path=args.config)
    if environ.get(ENV_OUT_DIR):
        d["output_dir"] = environ[ENV_OUT_DIR]
    for f in list(_FLAG_FIELDS) + ["suppress_volatile"]:
        v = getattr(args, f, None)
        if v is not None:
            d[f] = v
    try:
        return RunConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _error_json(exc, code) -> str:
    if isinstance(exc, LosmlError):
        body = exc.to_dict()
    elif isinstance(exc, FileNotFoundError):
        body = {"error": "FileNotFound", "message": exc.strerror or str(exc), "path": exc.filename}
    else:
        body = {"error": type(exc).__name__, "message": str(exc)}
    body["exit_code"] = code
    return json.dumps(body, sort_keys=True)


def exit_code_for(exc) -> int:
    if isinstance(exc, LosmlError):
        return {"config": EXIT_CONFIG, "data": EXIT_DATA, "numeric": EXIT_NUMERIC}[exc.family]
    if isinstance(exc, (FileNotFoundError, IsADirectoryError)):
        return EXIT_DATA
    if isinstance(exc, (FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return 1


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        if args.command == "pipeline":
            manifest = run_pipeline(cfg)
            print(json.dumps({"run_dir": str(cfg.run_dir()), "artifacts": len(manifest["artifacts"])}))
            return EXIT_OK
        run = Run(cfg)
        t0 = time.perf_counter()
        if args.command == "synth":
            stage_synth(run, Path(args.out) if args.out else None)
        elif args.command == "compare":
            stage_compare(run, args.a, args.b)
        else:
            {"prep": stage_prep, "select": stage_select, "train": stage_train,
             "evaluate": stage_evaluate, "explain": stage_explain}[args.command](run)
        run.timings[args.command] = time.perf_counter() - t0
        run.write_manifest()
        print(json.dumps({"run_dir": str(run.dir), "stage": args.command}))
        return EXIT_OK
    except Exception as exc:  # every failure leaves one JSON line on stderr
        code = exit_code_for(exc)
        sys.stderr.write(_error_json(exc, code) + "\n")
        return code
