import numpy as np
import pytest

# (criterion number, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance_report():
    def record(number, title, passed, detail):
        ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number} " \
                                   f"({title}): {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
