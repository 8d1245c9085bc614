import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criterion_lines = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the summary."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        _criterion_lines[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_lines):
        terminalreporter.write_line(_criterion_lines[number])
