import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_RESULTS = []


@pytest.fixture
def criterion():
    """Record a named acceptance outcome; the line is printed in the run summary."""

    def record(label, ok, detail):
        _RESULTS.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
