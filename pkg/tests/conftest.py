from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(key: str, ok: bool, detail: str) -> None:
        _LINES.append(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
