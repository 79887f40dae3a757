"""Grid reachable sets: oracles, order properties, verdicts."""

import numpy as np
import pytest

from robustcert.dynamics import SystemSpec
from robustcert.grids import GridSet
from robustcert.intervals import IntervalBox
from robustcert.reachability import (check_assumption1, check_invariance,
                                     check_safety, reach_over, reach_under)
from robustcert.regions import RegionSpec

D1 = IntervalBox([-1.0], [1.0])


def test_linear_endpoints_oracle(omega1):
    # x' = -x + d, |d| <= 0.2 from [-0.1, 0.1] fills out (-0.2, 0.2)
    bb = omega1.member_bounding_box()
    assert bb.lo[0] == pytest.approx(-0.2, abs=5e-3)
    assert bb.hi[0] == pytest.approx(0.2, abs=5e-3)
    assert not omega1.escaped


def test_quadratic_endpoints_oracle(omega2):
    # equilibria of -x + x^2 +/- 0.25 pin the reachable interval
    bb = omega2.member_bounding_box()
    assert bb.lo[0] == pytest.approx((1 - np.sqrt(2)) / 2, abs=1e-2)
    assert bb.hi[0] == pytest.approx(0.5, abs=1e-2)


def test_monotone_in_delta(ex1, seed_box):
    small = reach_over(ex1, seed_box, 0.1, D1, 5e-3)
    big = reach_over(ex1, seed_box, 0.2, D1, 5e-3)
    assert big.covers(small)
    assert big.num_members > small.num_members


def test_monotone_in_seed(ex1):
    inner = reach_over(ex1, RegionSpec.box([-0.05], [0.05]), 0.2, D1, 5e-3)
    outer = reach_over(ex1, RegionSpec.box([-0.1], [0.1]), 0.2, D1, 5e-3)
    assert outer.covers(inner)


def test_reach_is_fixpoint(ex1, omega1):
    again = reach_over(ex1, omega1, 0.2, D1, 1e-3)
    assert again.same_members(omega1)


def test_under_approximation_sandwich(ex1, seed_box, omega1):
    under = reach_under(ex1, seed_box, 0.2, D1, 1e-3, budget=100,
                        horizon=12.0, seed=0)
    assert omega1.covers(under)
    assert under.num_members > 0


def test_escape_flag(ex2, seed_box):
    cramped = reach_over(ex2, seed_box, 0.25, IntervalBox([-0.3], [0.3]),
                         5e-3)
    assert cramped.escaped


def test_safety_verdicts(ex1, seed_box, omega1, unsafe_half):
    under = reach_under(ex1, seed_box, 0.2, D1, 2e-3, budget=150,
                        horizon=12.0, seed=0)
    assert check_safety(omega1, unsafe_half).verdict == "safe"
    near = RegionSpec.box([0.2005], [0.4])
    assert check_safety(omega1, near, under=under).verdict == "unknown"
    overlapping = RegionSpec.box([0.0], [0.05])
    assert check_safety(omega1, overlapping, under=under).verdict == "unsafe"


def test_safety_witness_points(ex1, seed_box, omega1):
    overlapping = RegionSpec.box([0.0], [0.05])
    # over-approximation alone cannot certify "unsafe": no points, only cells
    bare = check_safety(omega1, overlapping)
    assert bare.verdict == "unknown"
    assert len(bare.witness_points) == 0
    assert len(bare.witness_cells) > 0
    under = reach_under(ex1, seed_box, 0.2, D1, 2e-3, budget=150,
                        horizon=12.0, seed=0)
    rep = check_safety(omega1, overlapping, under=under)
    assert rep.verdict == "unsafe"
    assert len(rep.witness_points) > 0


def test_assumption1_cases(omega1, unsafe_half):
    tight = check_assumption1(omega1, RegionSpec.superlevel("abs(x1)", 0.2))
    assert not tight.holds
    ok = check_assumption1(omega1, unsafe_half)
    assert ok.holds and ok.clearance >= 0.29
    far = check_assumption1(omega1, RegionSpec.superlevel("abs(x1)", 2.0))
    assert far.holds
    assert far.clearance == np.inf
    assert any("vacuous" in n for n in far.notes)


def test_invariance_consistency(ex1, omega1):
    good = check_invariance(ex1, omega1, 0.2, trials=100, seed=0)
    assert good.consistent and good.violations == 0
    # a larger disturbance admits equilibria outside the set
    bad = check_invariance(ex1, omega1, 0.35, trials=100, seed=0)
    assert not bad.consistent
    assert bad.witness is not None


def test_gridset_roundtrip(omega1):
    back = GridSet.from_json(omega1.to_json())
    assert back.same_members(omega1)
    assert back.to_csv() == omega1.to_csv()


def test_gridset_membership_queries(omega1):
    assert omega1.member_of([0.0])
    assert not omega1.member_of([0.5])
    grown = omega1.dilated(1)
    assert grown.covers(omega1)
    assert grown.num_members > omega1.num_members


def test_input_validation(ex1, seed_box):
    with pytest.raises(ValueError):
        reach_over(ex1, seed_box, -0.1, D1, 5e-3)
    with pytest.raises(ValueError):
        reach_over(SystemSpec(["-x1", "-x2"]), seed_box, 0.1, D1, 5e-3)
