"""Shared test reporting.

The acceptance checks in test_acceptance.py each record one pass/fail line;
the lines are replayed in a terminal section after the run so the gate status
is visible without -s.
"""

import pytest

_LINES = []


def record_criterion(num, title, ok, detail=""):
    line = f"criterion {num} [{'PASS' if ok else 'FAIL'}] {title}"
    if detail:
        line += f" ({detail})"
    _LINES.append(line)
    return line


@pytest.fixture
def criterion():
    def check(num, title, ok, detail=""):
        line = record_criterion(num, title, bool(ok), detail)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.line(line)
