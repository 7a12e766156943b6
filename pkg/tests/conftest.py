import pytest


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:  # pragma: no cover
        return
    lines = test_acceptance.REPORT
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
