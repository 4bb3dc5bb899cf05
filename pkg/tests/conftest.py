from __future__ import annotations

import math

import numpy as np
import pytest

from mdreach.backup import TransitionTable
from mdreach.grid import GridSpec
from mdreach.models import double_integrator, velocity_chain
from mdreach.problem import Problem
from mdreach.targets import BoxComplement, NodeValues

CHAIN_LAM = -math.log(0.9)  # gamma = 0.9 at dt = 1


def chain_grid() -> GridSpec:
    return GridSpec((0.0,), (1.0,), (2,))


def chain_table(velocities=(1.0,), lam=CHAIN_LAM) -> TransitionTable:
    """Two nodes, unit spacing, dt = 1: velocity 1 moves node 0 onto node 1,
    node 1 is clamped onto itself, velocity 0 stays put."""
    return TransitionTable(chain_grid(), velocity_chain(velocities), 1.0, lam)


def chain_problem(velocities=(0.0, 1.0), lam=CHAIN_LAM, kind="mdr") -> Problem:
    # l = (1, -1) with L = 2 gives h = (-1, -3)
    return Problem(chain_grid(), velocity_chain(velocities), NodeValues((1.0, -1.0), 2.0), kind=kind, lam=lam, dt=1.0)


def di_problem(n=41, u_max=2.0, lam=0.1, kind="mdr", dt=None, n_controls=2) -> Problem:
    grid = GridSpec((-1.0, -5.0), (5.0, 5.0), (n, n))
    target = BoxComplement((0.0, -3.0), (4.0, 3.0))
    return Problem(grid, double_integrator(u_max, n_controls), target, kind=kind, lam=lam, dt=dt)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
