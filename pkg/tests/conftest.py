import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from losml.data import ColumnSpec, Table

settings.register_profile(
    "losml", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("losml")


def make_table(columns, rows_values):
    """Build a Table from ``[(name, domain, kind, categories[, ordered])]`` and per-column raw values.

    Categorical values are given as labels (``None`` for missing).
    """
    specs, values = [], {}
    for col, raw in zip(columns, rows_values):
        name, domain, kind, cats = col[:4]
        spec = ColumnSpec(name, domain, kind, tuple(cats or ()), bool(col[4]) if len(col) > 4 else False)
        specs.append(spec)
        if kind == "categorical":
            lookup = {c: i for i, c in enumerate(spec.categories)}
            values[name] = np.array([-1 if v is None else lookup[v] for v in raw], dtype=np.int64)
        else:
            values[name] = np.array([np.nan if v is None else v for v in raw], dtype=np.float64)
    return Table(specs, values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
