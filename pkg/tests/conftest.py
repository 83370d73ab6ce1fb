import numpy as np
import pytest
from hypothesis import settings

from inhomwh import DriftModel, RegimeSchedule

from oracles import FLUID_BREAKPOINTS, FLUID_C, FLUID_DRIFT, FLUID_GENERATORS

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_generator(rng, d, scale=3.0, sparsity=0.0):
    M = rng.uniform(0, scale, (d, d))
    if sparsity:
        M[rng.random((d, d)) < sparsity] = 0.0
    np.fill_diagonal(M, 0.0)
    np.fill_diagonal(M, -M.sum(axis=1))
    return M


def random_drift(rng, d, n_plus=None):
    n_plus = n_plus if n_plus is not None else int(rng.integers(1, d))
    v = np.concatenate([rng.uniform(0.5, 3, n_plus), -rng.uniform(0.5, 3, d - n_plus)])
    rng.shuffle(v)
    return DriftModel(range(d), v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def fluid():
    """(schedule, drift, c) of the two-state fluid example."""
    return RegimeSchedule(FLUID_BREAKPOINTS, FLUID_GENERATORS), DriftModel(("e+", "e-"), FLUID_DRIFT), FLUID_C


ACCEPTANCE_LINES = []


def report(line):
    """Record one acceptance line; shown with ``-s`` and in the terminal summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
