from __future__ import annotations

import sys

import numpy as np
import pytest

from alphadla import StepLaw, get_table


@pytest.fixture(scope="session")
def law05():
    return StepLaw(0.5)


@pytest.fixture(scope="session")
def table05(law05):
    return get_table(law05)


@pytest.fixture(scope="session")
def law025():
    return StepLaw(0.25)


@pytest.fixture(scope="session")
def table025(law025):
    return get_table(law025)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
