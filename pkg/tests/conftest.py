"""Shared test configuration; collects the acceptance verdicts for the run summary."""

from collections import OrderedDict

import pytest

ACCEPTANCE = OrderedDict()


@pytest.fixture
def verdict():
    """Record one checked part of an acceptance criterion.

    ``verdict(criterion, part, ok, detail)`` stores the outcome; the test
    then asserts it so that pytest reports the failure as well.
    """
    def record(criterion, part, ok, detail=""):
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, parts in sorted(ACCEPTANCE.items()):
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"{status} criterion {criterion}")
        for part, ok, detail in parts:
            tr.write_line(f"    {'pass' if ok else 'FAIL'}  {part}: {detail}")
