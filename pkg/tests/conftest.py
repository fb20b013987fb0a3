from __future__ import annotations

from pathlib import Path

import pytest

from agentgit import Engine, default_registry, init_store

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.fixture
def store(tmp_path):
    return init_store(tmp_path / "store")


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture
def engine(store, registry):
    return Engine(store, registry)


def pytest_terminal_summary(terminalreporter):
    verdicts = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in rep.nodeid:
                continue
            if rep.when == "call" or rep.failed:
                verdicts[rep.nodeid.split("::")[-1]] = "PASS" if rep.passed else "FAIL"
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(verdicts.items()):
            terminalreporter.write_line(f"{verdict}  {name}")
