"""Region specifications: membership, cell classification, serialization."""

import numpy as np
import pytest

from robustcert.intervals import IntervalBox
from robustcert.regions import RegionSpec


def test_box_membership_and_classification():
    W = RegionSpec.box([-0.1], [0.1])
    assert W.contains([0.0]) and W.contains([0.1])
    assert not W.contains([0.11])
    assert W.classify_cell(IntervalBox([0.0], [0.05])) == "inside"
    assert W.classify_cell(IntervalBox([0.5], [0.6])) == "outside"
    assert W.classify_cell(IntervalBox([0.05], [0.15])) == "partial"


def test_box_union():
    R = RegionSpec.box_union([IntervalBox([-1.0], [-0.5]),
                              IntervalBox([0.5], [1.0])])
    assert R.contains([-0.7]) and R.contains([0.7])
    assert not R.contains([0.0])
    assert R.classify_cell(IntervalBox([-0.9], [-0.6])) == "inside"
    assert R.classify_cell(IntervalBox([-0.6], [-0.4])) == "partial"
    assert R.classify_cell(IntervalBox([-0.2], [0.2])) == "outside"


def test_level_set_regions():
    lower = RegionSpec.sublevel("x1^2 + x2^2", 1.0)
    upper = RegionSpec.superlevel("abs(x1)", 0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(-2, 2, size=2)
        assert lower.contains(p) == (p @ p <= 1.0)
        assert upper.contains(p[:1]) == (abs(p[0]) >= 0.5)
    assert lower.classify_cell(IntervalBox([-0.1, -0.1], [0.1, 0.1])) \
        == "inside"
    assert lower.classify_cell(IntervalBox([2.0, 2.0], [3.0, 3.0])) \
        == "outside"


def test_bounding_box():
    W = RegionSpec.box([-0.1, 0.0], [0.1, 0.2])
    bb = W.bounding_box()
    assert np.allclose(bb.lo, [-0.1, 0.0]) and np.allclose(bb.hi, [0.1, 0.2])


def test_dimension_check():
    R = RegionSpec.sublevel("x1 + x3", 0.0)
    R.check_dimension(3)
    with pytest.raises(ValueError):
        R.check_dimension(2)


def test_dict_roundtrip():
    for R in (RegionSpec.box([-1.0], [1.0]),
              RegionSpec.superlevel("abs(x1)", 0.5),
              RegionSpec.box_union([IntervalBox([0.0], [1.0])])):
        back = RegionSpec.from_dict(R.to_dict())
        for x in ([-0.5], [0.0], [0.6], [1.2]):
            assert back.contains(x) == R.contains(x)


def test_empty_region():
    E = RegionSpec.empty()
    assert E.is_syntactically_empty
    assert not E.contains([0.0])
    assert E.classify_cell(IntervalBox([-1.0], [1.0])) == "outside"
