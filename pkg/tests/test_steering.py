"""Steering construction: interpolation identity, tube bound, membership."""

import numpy as np
import pytest

from robustcert.dynamics import DisturbancePolicy, SystemSpec, simulate
from robustcert.regions import RegionSpec
from robustcert.steering import (SteeringParams, construct_steering,
                                 make_steering_params, steering_radius,
                                 verify_membership)


def test_drift_free_oracle():
    # with f = 0 the steered path is the straight line between endpoints
    sys_ = SystemSpec(["0 * x1"])
    base = simulate(sys_, [0.0], DisturbancePolicy.zero(), 1.0, step=0.01)
    K = RegionSpec.box([-1.0], [1.0])
    params = make_steering_params(sys_, K, 0.0, 0.2, tau=1.0,
                                  rng=np.random.default_rng(0))
    y0, y1 = np.array([0.05]), np.array([-0.05])
    res = construct_steering(sys_, base, y0, y1, params)
    t = res.trajectory.times
    expect = (1 - t) * y0[0] + t * y1[0]
    assert np.max(np.abs(res.trajectory.states[:, 0] - expect)) < 1e-12
    assert res.max_residual == pytest.approx(0.1, abs=1e-9)
    assert verify_membership(res.trajectory, sys_, 0.2).passed


def test_endpoints_are_exact():
    sys_ = SystemSpec(["-x1"])
    K = RegionSpec.box([-1.0], [1.0])
    params = make_steering_params(sys_, K, 0.1, 0.2, tau=1.0,
                                  rng=np.random.default_rng(1))
    base = simulate(sys_, [0.2], DisturbancePolicy.random(0.1, seed=5), 1.0,
                    step=0.01, rng=np.random.default_rng(5))
    y0 = base.states[0] + 0.7 * params.r
    y1 = base.states[-1] - 0.7 * params.r
    res = construct_steering(sys_, base, y0, y1, params)
    assert abs(res.trajectory.states[0, 0] - y0[0]) <= 1e-12
    assert abs(res.trajectory.states[-1, 0] - y1[0]) <= 1e-12
    assert res.tube <= params.r + 1e-12


def test_randomized_suite():
    rng = np.random.default_rng(42)
    for i in range(30):
        n = 1 + (i % 2)
        a = rng.uniform(0.3, 1.5, size=n)
        if n == 1:
            f = [f"-{a[0]:.3f} * x1"]
        else:
            f = [f"-{a[0]:.3f} * x1 + {rng.uniform(-0.5, 0.5):.3f} * x2",
                 f"-{a[1]:.3f} * x2"]
        sys_ = SystemSpec(f)
        K = RegionSpec.box([-1.0] * n, [1.0] * n)
        params = make_steering_params(sys_, K, 0.1, 0.2, tau=1.0,
                                      samples=2000,
                                      rng=np.random.default_rng(100 + i))
        base = simulate(sys_, rng.uniform(-0.3, 0.3, size=n),
                        DisturbancePolicy.random(0.1, seed=i), 1.0,
                        step=0.01, rng=np.random.default_rng(i))

        def ball(center):
            v = rng.normal(size=n)
            return center + params.r * rng.uniform() ** (1 / n) \
                * v / np.linalg.norm(v)

        res = construct_steering(sys_, base, ball(base.states[0]),
                                 ball(base.states[-1]), params)
        assert res.tube <= params.r + 1e-12
        assert verify_membership(res.trajectory, sys_, 0.2).passed


def test_discrete_steering():
    sys_ = SystemSpec(["0.9 * x1"], time_domain="discrete")
    K = RegionSpec.box([-1.0], [1.0])
    params = make_steering_params(sys_, K, 0.05, 0.2,
                                  rng=np.random.default_rng(2))
    base = simulate(sys_, [0.3], DisturbancePolicy.random(0.05, seed=9), 5)
    y0 = base.states[0] + 0.5 * params.r
    y1 = base.states[-1] - 0.5 * params.r
    res = construct_steering(sys_, base, y0, y1, params)
    assert abs(res.trajectory.states[-1, 0] - y1[0]) <= 1e-12
    assert verify_membership(res.trajectory, sys_, 0.2).passed


def test_radius_formula_and_infeasibility():
    sys_ = SystemSpec(["-x1"])
    K = RegionSpec.box([-1.0], [1.0])
    params = SteeringParams(K, 0.1, 0.2, 1.0, time_domain="continuous",
                            tau=1.0)
    # r = 0.99 * (delta - delta') / (2/tau + L)
    assert params.r == pytest.approx(0.99 * 0.1 / 3.0)
    assert steering_radius(params) == params.r
    # margin collapses when the nominal budget equals delta
    with pytest.raises(ValueError):
        make_steering_params(sys_, K, 0.2, 0.2, tau=1.0,
                             rng=np.random.default_rng(3))


def test_membership_flags_violation():
    sys_ = SystemSpec(["-x1"])
    base = simulate(sys_, [0.0], DisturbancePolicy.constant([0.3]), 1.0,
                    step=0.01)
    rep = verify_membership(base, sys_, 0.2)
    assert not rep.passed
    assert rep.fail_residual > 0.2
