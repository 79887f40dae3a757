"""Steering of perturbed trajectories between nearby endpoints.

Given a trajectory x of the delta'-perturbed system and target endpoints
y0, y1 within distance r of x's endpoints, the linear interpolant

    y(s) = x(s) + (s/T) * [y1 - x(T) + (x(0) - y0)] + (y0 - x0)

matches the targets exactly, stays within r of x, and is itself a valid
trajectory of the delta-perturbed system provided r is small enough:

    continuous: 2r/tau + delta' + L r < delta
    discrete:   r     + delta' + L r < delta

steering_radius returns 99% of the largest admissible r, so the membership
inequality holds strictly.  L must be a Lipschitz constant of f on the
r-neighborhood of the compact set K containing x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import SystemSpec, Trajectory, estimate_lipschitz
from .intervals import IntervalBox
from .regions import RegionSpec

_EPS = 1e-12


@dataclass
class SteeringParams:
    K: RegionSpec
    delta_prime: float
    delta: float
    L: float
    time_domain: str = "continuous"
    tau: float = 1.0
    r: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.delta_prime < self.delta):
            raise ValueError("need 0 <= delta_prime < delta")
        if self.L < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        if self.time_domain == "continuous" and self.tau <= 0:
            raise ValueError("tau must be positive for continuous steering")
        if self.r is None:
            self.r = steering_radius(self)
        margin = (2.0 * self.r / self.tau if self.time_domain == "continuous"
                  else self.r) + self.delta_prime + self.L * self.r
        if not margin < self.delta:
            raise ValueError("admissible radius violates the steering inequality")


def steering_radius(params: SteeringParams) -> float:
    """Largest admissible endpoint radius, scaled by 0.99 for strictness."""
    gap = params.delta - params.delta_prime
    if gap <= 0:
        raise ValueError("delta_prime must be strictly below delta")
    if params.time_domain == "continuous":
        return 0.99 * gap / (2.0 / params.tau + params.L)
    return 0.99 * gap / (1.0 + params.L)


def make_steering_params(sys: SystemSpec, K: RegionSpec, delta_prime: float,
                         delta: float, tau: float = 1.0, samples: int = 10000,
                         rng: Optional[np.random.Generator] = None) -> SteeringParams:
    """Build params with L estimated on B_r(K), iterating once on r.

    A first estimate on K itself gives a provisional radius; L is then
    re-estimated on K inflated by that radius, since the membership argument
    needs Lipschitzness on the tube around x, not just on K.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    hull = K.bounding_box()
    if hull is None:
        raise ValueError("K must have explicit bounds to estimate L")
    L0 = estimate_lipschitz(sys, hull, samples=samples, rng=rng)
    p0 = SteeringParams(K, delta_prime, delta, L0,
                        time_domain=sys.time_domain, tau=tau)
    L1 = estimate_lipschitz(sys, hull.dilated(p0.r), samples=samples, rng=rng)
    return SteeringParams(K, delta_prime, delta, max(L0, L1),
                          time_domain=sys.time_domain, tau=tau)


@dataclass
class SteeringResult:
    trajectory: Trajectory
    base: Trajectory
    r: float
    tube: float                 # max |y(s) - x(s)| over sample times
    residuals: np.ndarray       # implied disturbance norm per step
    max_residual: float
    notes: list = field(default_factory=list)


def construct_steering(sys: SystemSpec, x: Trajectory, y0, y1,
                       params: SteeringParams) -> SteeringResult:
    """Steer x to the endpoints (y0, y1) via the linear interpolant.

    The returned trajectory records the implied disturbance at each sample
    time, so verify_membership can check it against any outer bound.
    """
    if x.time_domain != params.time_domain:
        raise ValueError("trajectory and params disagree on the time domain")
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    x0, x1 = x.states[0], x.states[-1]
    T = float(x.times[-1] - x.times[0])
    r = float(params.r)
    if params.time_domain == "continuous" and T < params.tau - _EPS:
        raise ValueError(f"trajectory duration {T} is below tau={params.tau}")
    if np.linalg.norm(y0 - x0) > r + _EPS:
        raise ValueError("y0 is outside the admissible ball around x(0)")
    if np.linalg.norm(y1 - x1) > r + _EPS:
        raise ValueError("y1 is outside the admissible ball around x(T)")
    inside = params.K.contains(x.states)
    if not np.all(inside):
        raise ValueError("base trajectory leaves the steering set K")
    if x.max_disturbance_norm() > params.delta_prime + 1e-9:
        raise ValueError("base trajectory is not a delta'-solution")

    drift = y1 - x1 + (x0 - y0)          # total shift accrued over [0, T]
    s = (x.times - x.times[0]) / T
    shift = s[:, None] * drift + (y0 - x0)
    y_states = x.states + shift
    y_states[0] = y0
    y_states[-1] = y1
    tube = float(np.max(np.linalg.norm(shift, axis=-1)))

    if params.time_domain == "continuous":
        # implied disturbance at sample s: x'(s) + drift/T - f(y(s)),
        # with x'(s) = f(x(s)) + d_x(s) from the recorded inputs
        fx = sys.f_vec(x.states[:-1])
        fy = sys.f_vec(y_states[:-1])
        d_y = fx + x.disturbances + drift / T - fy
    else:
        d_y = y_states[1:] - sys.f_vec(y_states[:-1])

    residuals = np.linalg.norm(d_y, axis=-1)
    y = Trajectory(
        time_domain=x.time_domain, times=x.times.copy(), states=y_states,
        disturbances=d_y, delta=params.delta, step=x.step, dwell=x.dwell,
        meta={"steering": {"r": r, "tube": tube,
                           "y0": y0.tolist(), "y1": y1.tolist()},
              "system": sys.source})
    return SteeringResult(trajectory=y, base=x, r=r, tube=tube,
                          residuals=residuals,
                          max_residual=float(np.max(residuals)))


@dataclass
class MembershipReport:
    passed: bool
    max_residual: float
    fail_time: Optional[float] = None
    fail_residual: Optional[float] = None

    def __bool__(self) -> bool:
        return self.passed


def verify_membership(traj: Trajectory, sys: SystemSpec, delta: float) -> MembershipReport:
    """Check that a trajectory is a valid delta-perturbed solution.

    Continuous trajectories are judged by the recorded per-sample disturbance
    (for steered interpolants this is the exact implied input); discrete ones
    by recomputing |y(k+1) - f(y(k))| from the states.  Pass requires the
    residual to stay strictly below delta everywhere.
    """
    if traj.time_domain != sys.time_domain:
        raise ValueError("trajectory and system disagree on the time domain")
    if len(traj.disturbances) == 0:
        return MembershipReport(True, 0.0)
    if sys.time_domain == "discrete":
        residuals = np.linalg.norm(
            traj.states[1:] - sys.f_vec(traj.states[:-1]), axis=-1)
    else:
        residuals = np.linalg.norm(traj.disturbances, axis=-1)
    worst = int(np.argmax(residuals))
    max_res = float(residuals[worst])
    if max_res < delta:
        return MembershipReport(True, max_res)
    return MembershipReport(False, max_res, fail_time=float(traj.times[worst]),
                            fail_residual=max_res)
