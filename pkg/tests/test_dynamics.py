"""Perturbed simulation: integrator accuracy, policies, guards."""

import numpy as np
import pytest

from robustcert.dynamics import (DisturbancePolicy, SystemSpec,
                                 estimate_lipschitz, simulate, Trajectory)


def test_linear_decay_matches_exact_solution():
    sys_ = SystemSpec(["-x1"])
    traj = simulate(sys_, [1.0], DisturbancePolicy.zero(), 2.0, step=0.01)
    ref = np.exp(-traj.times)
    assert np.max(np.abs(traj.states[:, 0] - ref)) < 1e-8


def test_two_dim_rotation_preserves_norm():
    sys_ = SystemSpec(["-x2", "x1"])
    traj = simulate(sys_, [1.0, 0.0], DisturbancePolicy.zero(), 6.0,
                    step=0.005)
    norms = np.linalg.norm(traj.states, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-8


def test_discrete_map_is_exact():
    sys_ = SystemSpec(["0.9 * x1"], time_domain="discrete")
    traj = simulate(sys_, [1.0], DisturbancePolicy.zero(), 10)
    assert np.allclose(traj.states[:, 0], 0.9 ** np.arange(11))
    assert np.allclose(np.diff(traj.times), 1.0)


def test_random_policy_respects_bound():
    sys_ = SystemSpec(["-x1", "-x2"])
    traj = simulate(sys_, [0.1, 0.1], DisturbancePolicy.random(0.2, seed=4),
                    1.0, step=0.01, rng=np.random.default_rng(4))
    norms = np.linalg.norm(traj.disturbances, axis=1)
    assert traj.max_disturbance_norm() <= 0.2 + 1e-12
    assert norms.max() <= 0.2 + 1e-12
    assert norms.max() > 0.0


def test_dwell_holds_disturbance_piecewise_constant():
    sys_ = SystemSpec(["-x1"])
    traj = simulate(sys_, [0.05], DisturbancePolicy.random(0.2, seed=3), 1.0,
                    step=0.01, dwell=0.25, rng=np.random.default_rng(3))
    d = traj.disturbances[:, 0]
    for k in range(4):
        window = d[k * 25:(k + 1) * 25]
        assert np.all(window == window[0])


def test_constant_and_extremal_policies():
    sys_ = SystemSpec(["-x1"])
    tc = simulate(sys_, [0.0], DisturbancePolicy.constant([0.15]), 1.0,
                  step=0.01)
    assert np.all(tc.disturbances == 0.15)
    # extremal pushes along the given direction field at full magnitude;
    # the direction callback receives the current state batch
    pol = DisturbancePolicy.extremal(0.2,
                                     direction_fn=lambda x: np.ones_like(x))
    te = simulate(sys_, [0.0], pol, 1.0, step=0.01)
    assert np.allclose(np.abs(te.disturbances), 0.2)


def test_blow_up_guard():
    sys_ = SystemSpec(["x1^2"])
    traj = simulate(sys_, [1.0], DisturbancePolicy.zero(), 10.0, step=0.001)
    assert traj.blown_up
    assert traj.escape_time is not None and traj.escape_time < 10.0
    assert np.isfinite(traj.states).all()


def test_lipschitz_estimate_linear():
    sys_ = SystemSpec(["-2 * x1"])
    from robustcert.intervals import IntervalBox
    L = estimate_lipschitz(sys_, IntervalBox([-1.0], [1.0]),
                           rng=np.random.default_rng(0))
    # the estimate deliberately inflates the sampled slope a bit
    assert 2.0 <= L <= 2.5


def test_trajectory_serialization():
    sys_ = SystemSpec(["-x1"])
    traj = simulate(sys_, [0.5], DisturbancePolicy.random(0.1, seed=1), 0.5,
                    step=0.01, rng=np.random.default_rng(1))
    back = Trajectory.from_json(traj.to_json())
    assert np.allclose(back.times, traj.times)
    assert np.allclose(back.states, traj.states)
    csv = traj.to_csv()
    lines = csv.strip().splitlines()
    assert lines[0].startswith("#")
    assert lines[1].startswith("t,")
    assert len(lines) == len(traj.times) + 2


def test_bad_system_spec():
    with pytest.raises(ValueError):
        SystemSpec(["-x1"], time_domain="sometimes")
    with pytest.raises(ValueError):
        SystemSpec([])
