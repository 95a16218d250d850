import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record an acceptance outcome; the terminal summary prints one line per criterion."""

    def record(number, title, passed, detail):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
