"""Synthetic length-of-stay cohorts with planted ground truth.

Columns are tagged patient / clinical / system like a stroke audit extract.
Each row's log mean stay is a planted linear predictor over some signal
columns (plus optional step effects and one interaction); stays are drawn
from a gamma-Poisson (negative binomial) count model and clipped to 1..150
days. Clone columns are noisy copies of a source column, missingness is MCAR
with an exact per-column count, and dominant/rare categories can be injected
to exercise the preparation rules.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import ColumnSpec, Table
from .errors import InvalidSpec

LOS_MIN, LOS_MAX = 1, 150


@dataclass
class SynthColumn:
    name: str
    domain: str
    kind: str = "continuous"
    categories: Tuple[str, ...] = ()
    ordered: bool = False
    probs: Tuple[float, ...] = ()  # category probabilities (uniform when empty)
    coef: float = 0.0  # continuous slope, or effect of the top category vs others
    step_at: Optional[float] = None  # continuous: effect applies to 1[x > step_at] instead of x
    clone_of: Optional[str] = None
    clone_noise: float = 0.15
    missing: float = 0.0


@dataclass
class SynthSpec:
    name: str
    n_rows: int
    columns: List[SynthColumn]
    intercept: float = 1.6
    dispersion: float = 4.0  # gamma shape; smaller is more overdispersed
    interaction: Optional[Tuple[str, str, float]] = None
    seed: int = 0
    los_column: str = "los_days"

    def domain_counts(self) -> Dict[str, int]:
        out = {"patient": 0, "clinical": 0, "system": 0}
        for c in self.columns:
            out[c.domain] += 1
        return out

    @property
    def clone_groups(self) -> List[List[str]]:
        groups: Dict[str, List[str]] = {}
        for c in self.columns:
            if c.clone_of:
                groups.setdefault(c.clone_of, [c.clone_of]).append(c.name)
        return list(groups.values())

    def signal_columns(self) -> List[str]:
        names = [c.name for c in self.columns if c.coef != 0 and c.clone_of is None]
        if self.interaction:
            for n in self.interaction[:2]:
                if n not in names:
                    names.append(n)
        return names

    def noise_columns(self) -> List[str]:
        """Columns independent of the outcome: no effect and not a copy of anything."""
        signal = set(self.signal_columns())
        return [c.name for c in self.columns if c.name not in signal and c.clone_of is None]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["columns"] = [SynthColumn(**{**c, "categories": tuple(c.get("categories", ())),
                                       "probs": tuple(c.get("probs", ()))}) for c in d["columns"]]
        if d.get("interaction") is not None:
            d["interaction"] = tuple(d["interaction"])
        return cls(**d)


def validate(spec: SynthSpec) -> None:
    if spec.n_rows < 2:
        raise InvalidSpec("n_rows must be at least 2")
    names = [c.name for c in spec.columns]
    if len(set(names)) != len(names) or spec.los_column in names:
        raise InvalidSpec("column names must be unique and distinct from the outcome column")
    by_name = {c.name: c for c in spec.columns}
    for c in spec.columns:
        if c.domain not in ("patient", "clinical", "system"):
            raise InvalidSpec(f"column {c.name!r}: bad domain {c.domain!r}")
        if c.kind not in ("continuous", "categorical"):
            raise InvalidSpec(f"column {c.name!r}: bad kind {c.kind!r}")
        if c.kind == "categorical":
            if len(c.categories) < 2:
                raise InvalidSpec(f"column {c.name!r}: needs at least two categories")
            if c.probs and (len(c.probs) != len(c.categories) or abs(sum(c.probs) - 1) > 1e-9
                            or min(c.probs) < 0):
                raise InvalidSpec(f"column {c.name!r}: probabilities must match categories and sum to 1")
        if not 0 <= c.missing < 1:
            raise InvalidSpec(f"column {c.name!r}: missing fraction must lie in [0, 1)")
        if c.clone_of is not None:
            src = by_name.get(c.clone_of)
            if src is None or src.clone_of is not None or src.kind != "continuous" or c.kind != "continuous":
                raise InvalidSpec(f"column {c.name!r}: clones must copy an existing continuous source column")
    if spec.interaction:
        a, b, _ = spec.interaction
        if a not in by_name or b not in by_name:
            raise InvalidSpec("interaction references unknown columns")
    if spec.dispersion <= 0:
        raise InvalidSpec("dispersion must be positive")


def _effect(col: SynthColumn, raw):
    if col.kind == "categorical":
        return (raw == len(col.categories) - 1).astype(np.float64)
    if col.step_at is not None:
        return (raw > col.step_at).astype(np.float64)
    return raw


@dataclass
class GroundTruth:
    spec_name: str
    seed: int
    coefficients: Dict[str, float]
    step_effects: Dict[str, float]
    interaction: Optional[Tuple[str, str, float]]
    clone_groups: List[List[str]]
    signal_columns: List[str]
    noise_columns: List[str]
    linear_predictor: np.ndarray
    los: np.ndarray

    def true_risk(self, threshold_days: float, dispersion: float) -> np.ndarray:
        """P(LOS >= threshold_days) for every row under the generating model."""
        return _nb_sf_from(self.linear_predictor, dispersion, threshold_days)

    def to_dict(self, include_rows: bool = False):
        d = {
            "spec_name": self.spec_name, "seed": self.seed,
            "coefficients": {k: repr(v) for k, v in self.coefficients.items()},
            "step_effects": {k: repr(v) for k, v in self.step_effects.items()},
            "interaction": None if self.interaction is None else list(self.interaction),
            "clone_groups": self.clone_groups,
            "signal_columns": self.signal_columns,
            "noise_columns": self.noise_columns,
        }
        if include_rows:
            d["linear_predictor"] = [repr(float(v)) for v in self.linear_predictor]
        return d


def _nb_sf_from(eta, shape, t):
    # LOS = clip(1 + K, 1, 150) with K ~ NegBin(mean exp(eta), shape): P(LOS >= t) = P(K >= t - 1)
    from scipy.stats import nbinom

    mu = np.exp(eta)
    p = shape / (shape + mu)
    k = math.ceil(t) - 1
    if k <= 0:
        return np.ones_like(mu)
    if t > LOS_MAX:
        return np.zeros_like(mu)
    return nbinom.sf(k - 1, shape, p)


def generate(spec: SynthSpec, seed: Optional[int] = None):
    """Draw a :class:`~losml.data.Table` and its :class:`GroundTruth`."""
    validate(spec)
    seed = spec.seed if seed is None else seed
    root = np.random.SeedSequence(seed)
    rng = np.random.default_rng(root)
    n = spec.n_rows
    raw: Dict[str, np.ndarray] = {}
    by_name = {c.name: c for c in spec.columns}
    # independent columns first, in declared order; clones afterwards
    for c in spec.columns:
        if c.clone_of is not None:
            continue
        if c.kind == "continuous":
            raw[c.name] = rng.standard_normal(n)
        else:
            k = len(c.categories)
            probs = np.asarray(c.probs) if c.probs else np.full(k, 1.0 / k)
            raw[c.name] = rng.choice(k, size=n, p=probs)
    for c in spec.columns:
        if c.clone_of is not None:
            raw[c.name] = raw[c.clone_of] + c.clone_noise * rng.standard_normal(n)

    eta = np.full(n, spec.intercept)
    coefs, steps = {}, {}
    for c in spec.columns:
        if c.coef != 0 and c.clone_of is None:
            eta += c.coef * _effect(c, raw[c.name])
            (steps if c.step_at is not None else coefs)[c.name] = c.coef
    if spec.interaction:
        a, b, w = spec.interaction
        eta += w * _effect(by_name[a], raw[a]) * _effect(by_name[b], raw[b])

    mu = np.exp(eta)
    lam = rng.gamma(spec.dispersion, mu / spec.dispersion)
    los = np.clip(1 + rng.poisson(lam), LOS_MIN, LOS_MAX).astype(np.float64)

    values, specs = {}, []
    for c in spec.columns:
        v = raw[c.name]
        if c.kind == "continuous":
            v = np.round(v, 6)
            if c.missing > 0:
                v = v.copy()
                v[rng.choice(n, int(round(c.missing * n)), replace=False)] = np.nan
        else:
            v = v.astype(np.int64)
            if c.missing > 0:
                v = v.copy()
                v[rng.choice(n, int(round(c.missing * n)), replace=False)] = -1
        values[c.name] = v
        specs.append(ColumnSpec(c.name, c.domain, c.kind, tuple(c.categories), c.ordered))
    specs.append(ColumnSpec(spec.los_column, "outcome", "continuous"))
    values[spec.los_column] = los
    truth = GroundTruth(spec.name, seed, coefs, steps, spec.interaction, spec.clone_groups,
                        spec.signal_columns(), spec.noise_columns(), eta, los)
    return Table(specs, values), truth


# -- spec library ----------------------------------------------------------

_YES_NO = ("No", "Yes")
_BEDS = ("<50", "50-99", "100-199", "200+")


def _domain_columns(prefix, domain, n, rng, signal_idx, cat_every=3, missing=None):
    cols = []
    for i in range(n):
        name = f"{prefix}{i + 1:02d}"
        if i % cat_every == cat_every - 1:
            k = 2 + int(rng.integers(0, 3))
            cats = _YES_NO if k == 2 else tuple(f"level_{chr(97 + j)}" for j in range(k))
            cols.append(SynthColumn(name, domain, "categorical", cats))
        else:
            cols.append(SynthColumn(name, domain, "continuous"))
    for i, coef in signal_idx.items():
        cols[i].coef = coef
    for i, m in (missing or {}).items():
        cols[i].missing = m
    return cols


def audit_like_spec(name: str, n_rows: int, n_patient: int, n_clinical: int, n_system: int,
                    seed: int = 0) -> SynthSpec:
    """An audit-shaped cohort: signal, clones, noise, missingness tiers and rebalancing cases.

    The planted structure is fixed by position so that two specs of the same
    shape differ only by ``seed``:

    * patient: age-like continuous signal with a step at +1 sd, a signal
      category, noise;
    * clinical: six signal columns, a three-member clone group of a signal
      column, a 98.3%-dominant "Yes" column, mixed missingness;
    * system: four signal columns, an ordered bed-count column whose
      ``"<50"`` level is rare, a 20%-missing column, noise.
    """
    rng = np.random.default_rng(12345)  # layout only; data randomness uses ``seed``
    patient = _domain_columns("p", "patient", n_patient, rng, {0: 0.28, 2: 0.25})
    patient[0].step_at = 1.0
    patient[1].coef = 0.12
    clinical = _domain_columns("c", "clinical", n_clinical, rng,
                               {0: 0.22, 1: -0.18, 2: 0.30, 3: 0.15, 5: 0.35, 6: -0.12},
                               missing={3: 0.08, 4: 0.012, 7: 0.05, 8: 0.06, 9: 0.03})
    # clone group: c01 plus two near copies
    clinical[n_clinical - 1] = SynthColumn(f"c{n_clinical:02d}", "clinical", clone_of="c01")
    clinical[n_clinical - 2] = SynthColumn(f"c{n_clinical - 1:02d}", "clinical", clone_of="c01")
    clinical[n_clinical - 3] = SynthColumn(f"c{n_clinical - 2:02d}", "clinical", "categorical", _YES_NO,
                                           probs=(0.017, 0.983))
    system = _domain_columns("s", "system", n_system, rng, {0: 0.20, 1: -0.15, 3: 0.18, 4: 0.25},
                             missing={5: 0.015, 6: 0.01, 10: 0.04, 12: 0.2})
    system[2] = SynthColumn("s03", "system", "categorical", _BEDS, ordered=True,
                            probs=(0.0071, 0.3329, 0.40, 0.26), coef=0.2)
    system[7] = SynthColumn("s08", "system", clone_of="s01")
    cols = patient + clinical + system
    return SynthSpec(name, n_rows, cols, intercept=1.55, dispersion=4.0,
                     interaction=("p01", "c03", 0.25), seed=seed)


def tiny_spec(seed: int = 0) -> SynthSpec:
    cols = [
        SynthColumn("p01", "patient", coef=0.6),
        SynthColumn("p02", "patient", "categorical", _YES_NO, coef=0.5),
        SynthColumn("c01", "clinical", coef=-0.5, missing=0.05),
        SynthColumn("c02", "clinical", clone_of="c01"),
        SynthColumn("c03", "clinical", "categorical", ("mild", "moderate", "severe"), ordered=True, coef=0.4),
        SynthColumn("s01", "system", coef=0.3),
        SynthColumn("s02", "system", missing=0.01),
        SynthColumn("s03", "system", "categorical", ("A", "B", "C")),
    ]
    return SynthSpec("tiny", 200, cols, intercept=1.6, dispersion=6.0, seed=seed)


def default_specs(seed: int = 0) -> Dict[str, SynthSpec]:
    """Named spec library: ``ischaemic-like``, ``haemorrhagic-like`` and ``tiny``."""
    return {
        "ischaemic-like": audit_like_spec("ischaemic-like", 12575, 7, 25, 57, seed),
        "haemorrhagic-like": audit_like_spec("haemorrhagic-like", 1970, 7, 20, 56, seed),
        "tiny": tiny_spec(seed),
    }


def save_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
