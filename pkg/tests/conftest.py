import numpy as np
import pytest

# (criterion number, PASS/FAIL, detail) lines emitted by the acceptance suite
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n, status, detail in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(f"{status} criterion {n:2d}: {detail}")
