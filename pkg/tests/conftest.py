import pytest

from helpers import ACCEPTANCE_LINES, DATA, t3_market


@pytest.fixture
def t3():
    return t3_market()


@pytest.fixture
def t3_congested():
    return t3_market(0.5)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
