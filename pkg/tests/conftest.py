"""Shared fixtures and the acceptance summary printed at the end of a run."""

import copy
import json

import pytest

TINY = {
    "schema_version": 1,
    "name": "tiny",
    "seed": 9,
    "hamiltonian": {"builder": "heisenberg", "params": {"n": 4, "J": 0.3, "h": 1.0, "seed": 1, "boundary": "open"}},
    "initial_state": {"eigenstates": [1.0, 0.6]},
    "evolution": {"method": "exact"},
    "time_grid": {"n_steps": 48, "dt": 0.5},
    "shadows": {"n_snapshots": 60, "n_batches": 3, "locality": 2},
    "postprocess": {"alpha": 0.05},
    "oracle": {"enabled": True, "n_eigen": 3},
    "outputs": {"svg": True},
}


@pytest.fixture
def tiny_raw():
    return copy.deepcopy(TINY)


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a JSON file and return its path."""

    def write(raw, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw), encoding="utf-8")
        return path

    return write


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run full-scale checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="full-scale check; pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
