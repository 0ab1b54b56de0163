import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are printed at the end of the run."""
    def add(number, passed, detail):
        _LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
