"""Shared fixtures: the two benchmark systems and their certified objects.

Session scope keeps the expensive grid and synthesis work to one run; every
consumer treats these objects as read-only.
"""

import pytest

from robustcert.dynamics import SystemSpec
from robustcert.intervals import IntervalBox
from robustcert.lyapunov import synthesize_V
from robustcert.reachability import reach_over
from robustcert.regions import RegionSpec


@pytest.fixture(scope="session")
def ex1():
    return SystemSpec(["-x1"])


@pytest.fixture(scope="session")
def ex2():
    return SystemSpec(["-x1 + x1^2"])


@pytest.fixture(scope="session")
def exd():
    return SystemSpec(["x1 + 0.1 * (-x1)"], time_domain="discrete")


@pytest.fixture(scope="session")
def seed_box():
    return RegionSpec.box([-0.1], [0.1])


@pytest.fixture(scope="session")
def unsafe_half():
    return RegionSpec.superlevel("abs(x1)", 0.5)


@pytest.fixture(scope="session")
def omega1(ex1, seed_box):
    return reach_over(ex1, seed_box, 0.2, IntervalBox([-1.0], [1.0]), 1e-3)


@pytest.fixture(scope="session")
def omega1_half(ex1, seed_box):
    return reach_over(ex1, seed_box, 0.2, IntervalBox([-0.5], [0.5]), 1e-3)


@pytest.fixture(scope="session")
def omega2(ex2, seed_box):
    return reach_over(ex2, seed_box, 0.25, IntervalBox([-0.75], [0.75]), 1e-3)


@pytest.fixture(scope="session")
def omegad(exd, seed_box):
    return reach_over(exd, seed_box, 0.02, IntervalBox([-0.5], [0.5]), 1e-3)


@pytest.fixture(scope="session")
def lyap1(ex1, omega1_half):
    return synthesize_V(ex1, omega1_half, IntervalBox([-0.5], [0.5]), 0.1,
                        basis="smoothed_distance", kappa=200.0)


@pytest.fixture(scope="session")
def lyapd(exd, omegad):
    return synthesize_V(exd, omegad, IntervalBox([-0.5], [0.5]), 0.01)
