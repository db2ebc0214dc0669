from __future__ import annotations

import pytest

_LINES: dict[int, str] = {}


class AcceptanceReport:
    def record(self, number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES[number] = line
        print(line)


@pytest.fixture(scope="session")
def report() -> AcceptanceReport:
    return AcceptanceReport()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
