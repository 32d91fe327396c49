from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from ecocacc.runner import load_scenario, run_convoy

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@lru_cache(maxsize=None)
def shipped_run(name: str):
    """Run a shipped scenario once per session; returns (scenario, trace, report)."""
    scenario = load_scenario(SCENARIOS / f"{name}.yaml")
    trace, report = run_convoy(scenario)
    return scenario, trace, report


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return SCENARIOS


@pytest.fixture(scope="session")
def run_shipped():
    return shipped_run


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
