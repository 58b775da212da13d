from dataclasses import replace

import pytest

from syncpaths.closed_loop import run_comparison
from syncpaths.scenario import builtin_example

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def paired():
    """Sync-on / sync-off traces of the built-in examples at default settings."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_comparison(builtin_example(name))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def paired_fine():
    """Same as ``paired`` with dt halved and stride doubled (same sample times)."""
    cache = {}

    def get(name):
        if name not in cache:
            s = builtin_example(name)
            s = replace(s, sim=replace(s.sim, dt=s.sim.dt / 2, record_stride=s.sim.record_stride * 2))
            cache[name] = run_comparison(s)
        return cache[name]

    return get


@pytest.fixture
def acceptance_report():
    def record(label, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
