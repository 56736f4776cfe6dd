import math

import numpy as np
import pytest

from hyperwave.gauge import extract_fields, transport_frame
from hyperwave.geometry import Hyperboloid
from hyperwave.grid import Grid2D
from hyperwave.heat import HeatConfig, build_ladders
from hyperwave.wave import DataSpec, evolve, make_initial_data

# two bumps pointing in orthogonal target directions: the image is genuinely
# two-dimensional, so the connection and curvature are non-trivial
STRUCTURE = DataSpec(kind="multi_bump", width=0.4, amplitude=0.8, power=8,
                     centers=((0.45, 0.5), (0.55, 0.52)), directions=((1, 0), (0, 1)), drift=0.5)


def rate(coarse, fine, factor=2.0):
    return math.log(coarse / fine) / math.log(factor)


def structure_state(n, spec=STRUCTURE, H=None):
    H = H or Hyperboloid()
    grid = Grid2D(n, 1.0 / n)
    return make_initial_data(grid, H, spec)


def structure_triple(n, cfg=None, spec=STRUCTURE, cfl=0.4):
    """Ladders, frames and fields at t = dt with neighbours at t = 0 and 2 dt."""
    st = structure_state(n, spec)
    dt = cfl * st.grid.h
    traj = evolve(st, 2 * dt, dt)
    ladders = build_ladders(traj.states, cfg or HeatConfig())
    frames = [transport_frame(lad) for lad in ladders]
    fs = extract_fields(frames[1], frames[0], frames[2], dt)
    return {"traj": traj, "ladders": ladders, "frames": frames, "fields": fs, "dt": dt}


@pytest.fixture(scope="session")
def H():
    return Hyperboloid()


@pytest.fixture(scope="session")
def triple32():
    return structure_triple(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# a drifting two-bump wave on the box of side 2, long enough for a backward cone
CONE_DATA = DataSpec(kind="multi_bump", width=0.3, amplitude=0.8, power=8,
                     centers=((1.0, 1.0), (1.05, 0.97)), directions=((1, 0), (0, 1)), drift=0.5)
CONE_T = 0.65625
CONE_CFL = 0.375


def cone_trajectory(n):
    grid = Grid2D.from_extent(n, 2.0)
    st = make_initial_data(grid, Hyperboloid(), CONE_DATA)
    return evolve(st, CONE_T, CONE_CFL * grid.h, 1)


def standard_cone():
    """lam = 8, eps = 1: the slab runs from tau = -0.75 to tau = -0.09375."""
    from hyperwave.stress import ConeGeometry
    return ConeGeometry(0.75, (1.0, 1.0), -0.09375)


# one verdict line per acceptance criterion, echoed in the terminal summary
VERDICTS = []


def verdict(number, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
