"""Interval arithmetic: exact endpoints plus randomized containment."""

import numpy as np
import pytest

from robustcert.intervals import Interval, IntervalBox, IntervalDomainError


def test_arithmetic_endpoints():
    a = Interval(-1.0, 2.0)
    b = Interval(3.0, 5.0)
    assert (a + b).lo == 2.0 and (a + b).hi == 7.0
    assert (a - b).lo == -6.0 and (a - b).hi == -1.0
    assert (a * b).lo == -5.0 and (a * b).hi == 10.0
    assert (b / Interval(2.0, 4.0)).lo == 0.75
    # powers round outward by a few ulps
    sq = a.pow_int(2)
    assert sq.lo == 0.0 and sq.hi == pytest.approx(4.0, abs=1e-12)
    assert sq.hi >= 4.0
    assert a.abs().lo == 0.0 and a.abs().hi == 2.0


def test_division_by_zero_interval():
    with pytest.raises(IntervalDomainError):
        Interval(1.0, 2.0) / Interval(-1.0, 1.0)


def test_helpers():
    a = Interval(-1.0, 3.0)
    assert a.width == 4.0
    assert a.mid == 1.0
    assert a.mag == 3.0
    assert a.contains(0.0) and not a.contains(3.5)
    h = a.hull(Interval(4.0, 5.0))
    assert h.lo == -1.0 and h.hi == 5.0
    p = Interval.point(2.0)
    assert p.lo == p.hi == 2.0
    w = a.widened(0.5)
    assert w.lo == -1.5 and w.hi == 3.5


def test_containment_random():
    # interval image must enclose every pointwise image
    rng = np.random.default_rng(0)
    for _ in range(200):
        lo = rng.uniform(-3, 3, size=2)
        w = rng.uniform(0.0, 2.0, size=2)
        x_iv = Interval(lo[0], lo[0] + w[0])
        y_iv = Interval(lo[1], lo[1] + w[1])
        xs = rng.uniform(x_iv.lo, x_iv.hi, size=20)
        ys = rng.uniform(y_iv.lo, y_iv.hi, size=20)
        pairs = [
            (x_iv + y_iv, xs + ys),
            (x_iv - y_iv, xs - ys),
            (x_iv * y_iv, xs * ys),
            (x_iv.pow_int(3), xs ** 3),
            (x_iv.abs(), np.abs(xs)),
            (x_iv.exp(), np.exp(np.clip(xs, None, 50.0))),
            (x_iv.min(y_iv), np.minimum(xs, ys)),
            (x_iv.max(y_iv), np.maximum(xs, ys)),
        ]
        for iv, vals in pairs:
            assert iv.lo <= vals.min() + 1e-12
            assert iv.hi >= vals.max() - 1e-12


def test_sqrt_and_smoothplus_containment():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lo = rng.uniform(0.0, 2.0)
        iv = Interval(lo, lo + rng.uniform(0.0, 2.0))
        xs = rng.uniform(iv.lo, iv.hi, size=20)
        s = iv.sqrt()
        assert s.lo <= np.sqrt(xs).min() + 1e-12
        assert s.hi >= np.sqrt(xs).max() - 1e-12
        sp = iv.smoothplus(50.0)
        ref = np.logaddexp(0.0, 50.0 * xs) / 50.0
        assert sp.lo <= ref.min() + 1e-12 and sp.hi >= ref.max() - 1e-12


def test_box_basics():
    box = IntervalBox([-1.0, 0.0], [1.0, 2.0])
    assert box.n == 2
    assert np.allclose(box.center, [0.0, 1.0])
    assert np.allclose(box.widths, [2.0, 2.0])
    assert np.allclose(box.radius, [1.0, 1.0])
    assert box.diameter() == pytest.approx(np.sqrt(8.0))
    assert box.contains([0.5, 1.5])
    assert not box.contains([1.5, 1.0])
    assert box.contains_box(IntervalBox([-0.5, 0.5], [0.5, 1.5]))
    assert box.intersects_box(IntervalBox([0.5, 1.5], [2.0, 3.0]))
    assert not box.intersects_box(IntervalBox([2.0, 3.0], [3.0, 4.0]))
    assert len(box.corners()) == 4
    big = box.dilated(0.5)
    assert big.contains([1.4, -0.4])


def test_box_sampling():
    box = IntervalBox([-1.0, 0.0], [1.0, 2.0])
    rng = np.random.default_rng(2)
    pts = box.sample(rng, 100)
    assert pts.shape == (100, 2)
    assert all(box.contains(p) for p in pts)
