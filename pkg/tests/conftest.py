"""Shared pytest plumbing: collect acceptance verdict lines into a summary.

Each acceptance test records exactly one `ACCEPTANCE n: PASS/FAIL — ...`
line before asserting; the lines are echoed to stdout as they happen and
repeated in a dedicated section at the end of the run so the verdicts are
visible even when passing tests' output is captured.
"""
import pytest

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance():
    """Record one criterion verdict line (also printed immediately)."""
    def _record(line: str) -> None:
        _acceptance_lines.append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)
