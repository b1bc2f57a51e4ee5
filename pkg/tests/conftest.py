import numpy as np
import pytest

from haptic_codesign.presets import CRITICAL_TASK, NON_CRITICAL_TASK, REFERENCE_LINK, stipulated_table


@pytest.fixture
def link():
    return REFERENCE_LINK


@pytest.fixture
def table():
    return stipulated_table()


@pytest.fixture
def critical():
    return CRITICAL_TASK


@pytest.fixture
def non_critical():
    return NON_CRITICAL_TASK


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
