"""Shared fixtures: the two testbeds and their default experiment setups are
expensive, so they are built once per session."""

import numpy as np
import pytest

from lisreduce.experiment import ExperimentConfig, run_experiment, setup_experiment
from lisreduce.fem import build_bar, build_tunnel

ACCEPTANCE_RESULTS = {}


def random_spd(rng, d, cond=1e2):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.logspace(0, np.log10(cond), d)
    return (Q * w) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bar():
    return build_bar()


@pytest.fixture(scope="session")
def tunnel():
    return build_tunnel()


@pytest.fixture(scope="session")
def bar_config():
    return ExperimentConfig(model="bar", timing=False, seeds={"locations": 0, "data": 0, "snapshots": 0})


@pytest.fixture(scope="session")
def tunnel_config():
    return ExperimentConfig(model="tunnel", timing=False, seeds={"locations": 0, "data": 0, "snapshots": 0})


@pytest.fixture(scope="session")
def bar_setup(bar, bar_config):
    return setup_experiment(bar_config, bar)


@pytest.fixture(scope="session")
def tunnel_setup(tunnel, tunnel_config):
    return setup_experiment(tunnel_config, tunnel)


@pytest.fixture(scope="session")
def bar_report(bar_config, bar_setup):
    return run_experiment(bar_config, bar_setup)


@pytest.fixture(scope="session")
def tunnel_report(tunnel_config, tunnel_setup):
    return run_experiment(tunnel_config, tunnel_setup)


def record(criterion, passed, detail):
    """Store one acceptance outcome for the terminal summary."""
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
    print(f"[acceptance] criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
