from pathlib import Path

import numpy as np
import pytest

from tfgd import data

ROOT = Path(__file__).resolve().parents[1]
WDBC = ROOT / "data" / "wdbc.data"


@pytest.fixture(scope="session")
def wdbc_path() -> Path:
    return WDBC


@pytest.fixture(scope="session")
def wdbc() -> data.Dataset:
    return data.load_wdbc(WDBC)


@pytest.fixture(scope="session")
def wdbc_split(wdbc):
    sp = data.split(wdbc, 42, 0.2)
    return data.standardize(wdbc, sp), sp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_difference(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
