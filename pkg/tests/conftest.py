from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from idpattern.cli import data_path

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (ok, detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 10):
        if number not in _CRITERIA:
            terminalreporter.write_line(f"AC{number}: NOT RUN  (skipped or deselected)")
            continue
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"AC{number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return data_path("fixtures")


@pytest.fixture
def fixture_copy(tmp_path, fixtures_dir) -> Path:
    """Writable copy of the bundled fixture data, with taxonomy and roster alongside."""
    dest = tmp_path / "data" / "fixtures"
    shutil.copytree(fixtures_dir, dest)
    shutil.copy(data_path("taxonomy.jsonl"), dest.parent / "taxonomy.jsonl")
    shutil.copy(data_path("roster.json"), dest.parent / "roster.json")
    return dest
