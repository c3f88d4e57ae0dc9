"""Tabular dataset representation, CSV/schema I/O, encoding and splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateOutcome,
    EmptyInput,
    LosmlError,
    MissingCellsPresent,
    SchemaError,
    SingleClass,
    TypeParseError,
    UnknownCategory,
    UnknownColumn,
)

DOMAINS = ("patient", "clinical", "system", "outcome")
KINDS = ("continuous", "categorical")
MISSING_TOKENS = ("", "NA")

#: Prolonged-stay cut-offs (days) reported for the two stroke cohorts.
REPORTED_THRESHOLDS = {"ischaemic": 9, "haemorrhagic": 11}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    domain: str
    kind: str
    categories: Tuple[str, ...] = ()
    ordered: bool = False

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise SchemaError(f"column {self.name!r}: unknown domain {self.domain!r}", column=self.name)
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}", column=self.name)
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == "categorical":
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"column {self.name!r}: duplicate categories", column=self.name)
        elif self.categories:
            raise SchemaError(f"continuous column {self.name!r} declares categories", column=self.name)

    @property
    def is_categorical(self):
        return self.kind == "categorical"

    def to_dict(self):
        out = {"name": self.name, "domain": self.domain, "kind": self.kind}
        if self.is_categorical:
            out["categories"] = list(self.categories)
            if self.ordered:
                out["ordered"] = True
        return out

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                name=d["name"],
                domain=d["domain"],
                kind=d["kind"],
                categories=tuple(d.get("categories") or ()),
                ordered=bool(d.get("ordered", False)),
            )
        except KeyError as exc:
            raise SchemaError(f"schema entry missing field {exc}") from None


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Table:
    """Immutable column store.

    Continuous columns hold float64 with NaN as the missing sentinel;
    categorical columns hold int64 indices into ``spec.categories`` with
    -1 as the missing sentinel.
    """

    def __init__(self, specs: Sequence[ColumnSpec], values: Dict[str, np.ndarray]):
        specs = list(specs)
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if sum(s.domain == "outcome" for s in specs) > 1:
            raise SchemaError("at most one outcome column is allowed")
        if set(values) != set(names):
            raise SchemaError("values and specs disagree on column names")
        lengths = {len(values[n]) for n in names}
        if len(lengths) > 1:
            raise SchemaError("columns have unequal lengths")
        self._specs = tuple(specs)
        self._index = {s.name: i for i, s in enumerate(specs)}
        self._values = {}
        for s in specs:
            v = np.asarray(values[s.name])
            if s.is_categorical:
                v = v.astype(np.int64)
                if v.size and (v.min() < -1 or v.max() >= len(s.categories)):
                    raise SchemaError(f"column {s.name!r}: category index out of range", column=s.name)
            else:
                v = v.astype(np.float64)
            self._values[s.name] = _readonly(v)
        self.n_rows = lengths.pop() if lengths else 0

    # -- basic accessors --------------------------------------------------

    @property
    def specs(self) -> Tuple[ColumnSpec, ...]:
        return self._specs

    @property
    def names(self) -> List[str]:
        return [s.name for s in self._specs]

    def spec(self, name: str) -> ColumnSpec:
        try:
            return self._specs[self._index[name]]
        except KeyError:
            raise UnknownColumn(f"unknown column {name!r}", column=name) from None

    def __contains__(self, name):
        return name in self._index

    def column(self, name: str) -> np.ndarray:
        self.spec(name)
        return self._values[name]

    def mask(self, name: str) -> np.ndarray:
        s = self.spec(name)
        v = self._values[name]
        return v < 0 if s.is_categorical else np.isnan(v)

    @property
    def missing_mask(self) -> np.ndarray:
        if not self._specs:
            return np.zeros((self.n_rows, 0), dtype=bool)
        return np.column_stack([self.mask(n) for n in self.names])

    @property
    def outcome_column(self) -> Optional[str]:
        for s in self._specs:
            if s.domain == "outcome":
                return s.name
        return None

    def predictor_names(self) -> List[str]:
        return [s.name for s in self._specs if s.domain != "outcome"]

    def labels_of(self, name: str) -> np.ndarray:
        """Category strings of a categorical column (missing -> None)."""
        s = self.spec(name)
        cats = np.array(list(s.categories) + [None], dtype=object)
        return cats[self._values[name]]

    # -- derivation -------------------------------------------------------

    def select(self, names: Iterable[str]) -> "Table":
        names = list(names)
        return Table([self.spec(n) for n in names], {n: self._values[n] for n in names})

    def drop(self, names: Iterable[str]) -> "Table":
        names = set(names)
        return self.select([n for n in self.names if n not in names])

    def take(self, rows) -> "Table":
        rows = np.asarray(rows)
        return Table(self._specs, {n: v[rows] for n, v in self._values.items()})

    def replace(self, name: str, values, spec: Optional[ColumnSpec] = None) -> "Table":
        spec = spec or self.spec(name)
        specs = [spec if s.name == name else s for s in self._specs]
        vals = dict(self._values)
        vals[name] = values
        return Table(specs, vals)

    def with_column(self, spec: ColumnSpec, values) -> "Table":
        return Table(list(self._specs) + [spec], {**self._values, spec.name: values})

    def equals(self, other: "Table") -> bool:
        if self._specs != other._specs or self.n_rows != other.n_rows:
            return False
        for n in self.names:
            a, b = self._values[n], other._values[n]
            if not np.array_equal(a, b, equal_nan=not self.spec(n).is_categorical):
                return False
        return True

    def __repr__(self):
        return f"Table(n_rows={self.n_rows}, n_cols={len(self._specs)})"


# -- schema + CSV I/O ------------------------------------------------------


def load_schema(path) -> List[ColumnSpec]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"schema file not found: {path}", path=str(path))
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema is not valid JSON: {exc}", path=str(path)) from None
    if not isinstance(raw, list):
        raise SchemaError("schema must be a JSON array", path=str(path))
    return [ColumnSpec.from_dict(d) for d in raw]


def save_schema(specs: Sequence[ColumnSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict() for s in specs], fh, indent=2)
        fh.write("\n")


def load_csv(path, schema: Sequence[ColumnSpec]) -> Table:
    """Read a UTF-8 CSV whose header matches ``schema``.

    Empty cells and ``NA`` are missing. Categorical cells must be one of the
    declared categories.
    """
    path = Path(path)
    if not path.exists():
        raise LosmlError(f"data file not found: {path}", path=str(path))
    by_name = {s.name: s for s in schema}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path} is empty", path=str(path)) from None
        unknown = [h for h in header if h not in by_name]
        absent = [n for n in by_name if n not in header]
        if unknown or absent or len(set(header)) != len(header):
            col = (unknown or absent or [None])[0]
            raise UnknownColumn(
                f"header does not match schema (unknown={unknown}, missing={absent})",
                column=col,
            )
        cols = {h: [] for h in header}
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TypeParseError(f"row {r}: expected {len(header)} fields, got {len(row)}", row=r)
            for h, cell in zip(header, row):
                cols[h].append(cell)

    values = {}
    for s in schema:
        raw = cols[s.name]
        if s.is_categorical:
            lookup = {c: i for i, c in enumerate(s.categories)}
            out = np.empty(len(raw), dtype=np.int64)
            for i, cell in enumerate(raw):
                if cell in MISSING_TOKENS:
                    out[i] = -1
                elif cell in lookup:
                    out[i] = lookup[cell]
                else:
                    raise UnknownCategory(
                        f"row {i + 2}, column {s.name!r}: unknown category {cell!r}",
                        row=i + 2, column=s.name, value=cell,
                    )
        else:
            out = np.empty(len(raw), dtype=np.float64)
            for i, cell in enumerate(raw):
                if cell in MISSING_TOKENS:
                    out[i] = np.nan
                    continue
                try:
                    out[i] = float(cell)
                except ValueError:
                    raise TypeParseError(
                        f"row {i + 2}, column {s.name!r}: cannot parse {cell!r} as a number",
                        row=i + 2, column=s.name, value=cell,
                    ) from None
        values[s.name] = out
    return Table(list(schema), values)


def _format_number(v: float) -> str:
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_csv(table: Table, path) -> None:
    cols = []
    for s in table.specs:
        v = table.column(s.name)
        if s.is_categorical:
            cats = list(s.categories) + [""]
            cols.append([cats[i] for i in v])
        else:
            cols.append([_format_number(x) for x in v.tolist()])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.names)
        w.writerows(zip(*cols))


# -- outcome ---------------------------------------------------------------


@dataclass
class OutcomeSpec:
    los_column: str
    percentile: float = 0.75
    label_name: str = "prolonged_los"
    threshold_days: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.percentile < 1:
            raise LosmlError(f"percentile must lie in (0, 1), got {self.percentile}")


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile between order statistics."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise EmptyInput("percentile of an empty array")
    if not 0 < q < 1:
        raise LosmlError(f"q must lie in (0, 1), got {q}")
    h = (v.size - 1) * q
    lo = int(math.floor(h))
    if lo + 1 >= v.size:
        return float(v[lo])
    return float(v[lo] + (h - lo) * (v[lo + 1] - v[lo]))


def dichotomize_outcome(table: Table, spec: OutcomeSpec, rows=None):
    """Label stays above the configured length-of-stay percentile.

    The cut-off is computed on ``rows`` when given (e.g. training rows only)
    and on the whole table otherwise. Returns ``(labels, threshold_days)``
    where ``threshold_days`` is the smallest integer stay counted as
    prolonged when stays are whole days, else the raw cut-off.
    """
    s = table.spec(spec.los_column)
    if s.is_categorical:
        raise LosmlError(f"outcome column {s.name!r} must be continuous")
    los = table.column(spec.los_column)
    if los.size == 0:
        raise EmptyInput("no rows to dichotomize")
    if np.isnan(los).any():
        raise MissingCellsPresent(f"outcome column {s.name!r} has missing values", column=s.name)
    ref = los if rows is None else los[np.asarray(rows)]
    t = percentile(ref, spec.percentile)
    labels = (los > t).astype(np.int64)
    if labels.min() == labels.max():
        raise DegenerateOutcome(f"all stays fall on one side of the cut-off {t}", threshold=t)
    integral = bool(np.all(los == np.floor(los)))
    threshold_days = float(math.floor(t) + 1) if integral else t
    spec.threshold_days = threshold_days
    return labels, threshold_days


# -- encoding --------------------------------------------------------------


@dataclass
class EncodedMatrix:
    feature_names: List[str]
    source_map: Dict[str, str]
    X: np.ndarray
    y: Optional[np.ndarray] = None
    mode: str = "full"
    feature_kinds: Dict[str, str] = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.feature_names)

    def index(self, names: Iterable[str]) -> List[int]:
        pos = {n: i for i, n in enumerate(self.feature_names)}
        return [pos[n] for n in names]

    def subset(self, names: Sequence[str]) -> "EncodedMatrix":
        idx = self.index(names)
        names = list(names)
        return EncodedMatrix(
            names,
            {n: self.source_map[n] for n in names},
            self.X[:, idx],
            self.y,
            self.mode,
            {n: self.feature_kinds.get(n, "continuous") for n in names},
        )

    def take(self, rows) -> "EncodedMatrix":
        rows = np.asarray(rows)
        y = None if self.y is None else self.y[rows]
        return EncodedMatrix(list(self.feature_names), dict(self.source_map), self.X[rows], y,
                             self.mode, dict(self.feature_kinds))

    def features_of(self, source: str) -> List[str]:
        return [f for f in self.feature_names if self.source_map[f] == source]


def one_hot_encode(table: Table, mode: str = "full", labels=None, columns=None) -> EncodedMatrix:
    """Expand categorical columns into ``col=category`` indicator features.

    Categories are ordered lexicographically; ``drop_first`` omits the first
    one per column. The outcome column is never encoded.
    """
    if mode not in ("full", "drop_first"):
        raise LosmlError(f"unknown encoding mode {mode!r}")
    names = table.predictor_names() if columns is None else list(columns)
    feats, source, kinds, blocks = [], {}, {}, []
    for name in names:
        s = table.spec(name)
        if table.mask(name).any():
            raise MissingCellsPresent(f"column {name!r} has missing cells", column=name)
        v = table.column(name)
        if not s.is_categorical:
            feats.append(name)
            source[name] = name
            kinds[name] = "continuous"
            blocks.append(v[:, None].astype(np.float64))
            continue
        order = sorted(range(len(s.categories)), key=lambda i: s.categories[i])
        if mode == "drop_first":
            order = order[1:]
        for ci in order:
            fname = f"{name}={s.categories[ci]}"
            feats.append(fname)
            source[fname] = name
            kinds[fname] = "binary"
            blocks.append((v == ci).astype(np.float64)[:, None])
    X = np.hstack(blocks) if blocks else np.zeros((table.n_rows, 0))
    y = None if labels is None else np.asarray(labels, dtype=np.int64)
    return EncodedMatrix(feats, source, np.ascontiguousarray(X), y, mode, kinds)


# -- splitting -------------------------------------------------------------


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    train_fraction: float


def _check_binary(labels):
    y = np.asarray(labels).astype(np.int64).ravel()
    if y.size == 0:
        raise EmptyInput("no labels")
    if not np.isin(y, (0, 1)).all():
        raise LosmlError("labels must be coded 0/1")
    if y.min() == y.max():
        raise SingleClass("labels contain a single class")
    return y


def stratified_split(labels, train_fraction: float = 0.8, seed: int = 0) -> SplitIndices:
    """Seeded per-class shuffle; the global train size is round(n * fraction)."""
    y = _check_binary(labels)
    if not 0 < train_fraction < 1:
        raise LosmlError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = y.size
    n_train = int(math.floor(n * train_fraction + 0.5))
    rng = np.random.default_rng(seed)
    members = [np.flatnonzero(y == c) for c in (0, 1)]
    quotas = [len(m) * n_train / n for m in members]
    take = [int(math.floor(q)) for q in quotas]
    # largest remainder; ties go to the lower class label
    for c in sorted((0, 1), key=lambda c: -(quotas[c] - take[c]))[: n_train - sum(take)]:
        take[c] += 1
    train, test = [], []
    for c, idx in enumerate(members):
        perm = rng.permutation(idx)
        train.append(perm[: take[c]])
        test.append(perm[take[c]:])
    return SplitIndices(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)),
                        seed, train_fraction)


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified k-fold partition as ``[(fit_rows, held_rows), ...]``.

    Each class is shuffled then dealt round-robin, so per-fold class counts
    differ by at most one.
    """
    y = _check_binary(labels)
    if k < 2:
        raise LosmlError("k must be at least 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in (0, 1):
        perm = rng.permutation(np.flatnonzero(y == c))
        fold_of[perm] = (np.arange(perm.size) + offset) % k
        offset = (offset + perm.size) % k
    out = []
    for f in range(k):
        held = np.flatnonzero(fold_of == f)
        fit = np.flatnonzero(fold_of != f)
        out.append((fit, held))
    return out
