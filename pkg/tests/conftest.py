"""Shared fixtures.  Expensive pipelines are computed once per session."""

import time

import numpy as np
import pytest

from augphase.models import make_model
from augphase.validate import compute_reduction, relaxation_spike_analysis

_ACCEPTANCE_LINES = []
# wall-clock seconds of the session fixtures, for the runtime targets
TIMINGS = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion, printed at session end."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def hopf_red():
    return compute_reduction(make_model("hopf"))


@pytest.fixture(scope="session")
def hopf_red_vneg():
    # IRC normalized with v = (-1, 0), the orientation of the closed-form table
    return compute_reduction(make_model("hopf"), irc_v=(-1.0, 0.0))


@pytest.fixture(scope="session")
def hopf_d1_red():
    return compute_reduction(make_model("hopf", d=1.0))


@pytest.fixture(scope="session")
def sniper_red():
    return compute_reduction(make_model("sniper"))


@pytest.fixture(scope="session")
def bautin_red():
    return compute_reduction(make_model("bautin"))


@pytest.fixture(scope="session")
def lo_red():
    return compute_reduction(make_model("lambda_omega"))


@pytest.fixture(scope="session")
def vdp01_red():
    return compute_reduction(make_model("vdp", mu=0.1))


def _timed(name, fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    TIMINGS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def sand_red():
    return _timed("sandstede", compute_reduction, make_model("sandstede"))


@pytest.fixture(scope="session")
def vdp_sweep():
    return _timed("vdp_sweep", relaxation_spike_analysis, (0.1, 0.01, 0.001), keep_curves=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
