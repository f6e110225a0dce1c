"""Shared pytest plumbing.

The acceptance module registers one line per criterion here; the terminal
summary hook prints them after the run so every criterion shows a visible
PASS/FAIL verdict even though pytest captures stdout.
"""

from __future__ import annotations

ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((number, bool(ok), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_LINES):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:02d} {verdict}  {detail}")
