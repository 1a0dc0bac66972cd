import csv
from pathlib import Path

import numpy as np
import pytest

from uqeval.store import ClassCatalog, PredictionTensor

DATA = Path(__file__).parent / "data"


def load_table3() -> dict[str, dict[str, float]]:
    with open(DATA / "table3_per_class.csv", newline="") as fh:
        return {r["Disease"]: {k: float(v) for k, v in r.items() if k != "Disease"} for r in csv.DictReader(fh)}


@pytest.fixture(scope="session")
def table3():
    return load_table3()


def make_tensor(values, names=None) -> PredictionTensor:
    v = np.asarray(values, dtype=np.float64)
    n, k, m = v.shape
    names = names or tuple(f"c{i}" for i in range(k))
    return PredictionTensor(
        v, tuple(f"m{j}" for j in range(m)), tuple(f"img{i}" for i in range(n)), ClassCatalog(tuple(names))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: PASS if the test body finished without raising."""
    name = request.node.get_closest_marker("criterion").args[0]
    notes: list[str] = []
    yield notes
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    detail = f" ({'; '.join(notes)})" if notes else ""
    ACCEPTANCE_LINES.append(f"{'FAIL' if failed else 'PASS'}  {name}{detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
