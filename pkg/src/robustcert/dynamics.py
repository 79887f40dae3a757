"""Perturbed system models and trajectory simulation.

Continuous-time systems x' = f(x) + d are integrated with fixed-step RK4
under piecewise-constant disturbances held over a dwell interval; discrete
systems apply x(t+1) = f(x(t)) + d(t) exactly.  Disturbances always satisfy
|d| <= delta.  A blow-up guard truncates any trajectory whose norm reaches
1e6 (or goes non-finite) and records the escape time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exprlang import Expr, compile_expr, grad, max_var_index, parse, to_string
from .intervals import IntervalBox

BLOWUP_NORM = 1e6


def _as_exprs(fs) -> tuple:
    out = []
    for f in fs:
        out.append(parse(f) if isinstance(f, str) else f)
    return tuple(out)


@dataclass
class SystemSpec:
    """Right-hand side f of a perturbed system, one expression per state."""

    f: tuple
    time_domain: str = "continuous"
    lipschitz_hint: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        self.f = _as_exprs(self.f)
        if not self.f:
            raise ValueError("system needs at least one state equation")
        if self.time_domain not in ("continuous", "discrete"):
            raise ValueError(f"time_domain must be continuous or discrete, "
                             f"got {self.time_domain!r}")
        for i, e in enumerate(self.f):
            top = max_var_index(e)
            if top >= self.n:
                raise ValueError(
                    f"f[{i}] uses x{top + 1} but the system has {self.n} states")
        self._compiled = None

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def source(self) -> list[str]:
        return [to_string(e) for e in self.f]

    def _ensure_compiled(self):
        if self._compiled is None:
            self._compiled = [compile_expr(e) for e in self.f]
        return self._compiled

    def f_vec(self, x) -> np.ndarray:
        """Vector field at points of shape (..., n); returns (..., n)."""
        x = np.asarray(x, dtype=float)
        fns = self._ensure_compiled()
        with np.errstate(all="ignore"):
            return np.stack([fn(x) for fn in fns], axis=-1)

    def to_dict(self) -> dict:
        return {"f": self.source, "time_domain": self.time_domain,
                "lipschitz_hint": self.lipschitz_hint, "name": self.name}


@dataclass
class DisturbancePolicy:
    """How the disturbance d is chosen along a run, within |d| <= delta."""

    kind: str  # zero | constant | piecewise_constant_random | extremal
    delta: float = 0.0
    vector: Optional[np.ndarray] = None
    seed: int = 0
    direction: Optional[tuple] = None       # expressions, normalised at runtime
    align_gradient_of: Optional[Expr] = None
    direction_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "piecewise_constant_random", "extremal"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=float)
            if np.linalg.norm(self.vector) > self.delta + 1e-12:
                raise ValueError("constant disturbance exceeds the bound delta")
        if self.kind == "extremal" and not (
                self.direction or self.align_gradient_of or self.direction_fn):
            raise ValueError("extremal policy needs a direction or gradient target")
        if self.direction is not None:
            self.direction = _as_exprs(self.direction)
        if isinstance(self.align_gradient_of, str):
            self.align_gradient_of = parse(self.align_gradient_of)

    @staticmethod
    def zero() -> "DisturbancePolicy":
        return DisturbancePolicy("zero", delta=0.0)

    @staticmethod
    def constant(vector, delta: Optional[float] = None) -> "DisturbancePolicy":
        v = np.asarray(vector, dtype=float)
        if delta is None:
            delta = float(np.linalg.norm(v))
        return DisturbancePolicy("constant", delta=delta, vector=v)

    @staticmethod
    def random(delta: float, seed: int = 0) -> "DisturbancePolicy":
        return DisturbancePolicy("piecewise_constant_random", delta=delta, seed=seed)

    @staticmethod
    def extremal(delta: float, direction=None, align_gradient_of=None,
                 direction_fn=None) -> "DisturbancePolicy":
        return DisturbancePolicy("extremal", delta=delta, direction=direction,
                                 align_gradient_of=align_gradient_of,
                                 direction_fn=direction_fn)

    def draw(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Disturbance values for a batch of states (B, n)."""
        B, n = x.shape
        if self.kind == "zero":
            return np.zeros((B, n))
        if self.kind == "constant":
            return np.broadcast_to(self.vector, (B, n)).copy()
        if self.kind == "piecewise_constant_random":
            # uniform over the delta-ball
            raw = rng.normal(size=(B, n))
            norms = np.linalg.norm(raw, axis=-1, keepdims=True)
            norms[norms == 0] = 1.0
            radii = self.delta * rng.uniform(size=(B, 1)) ** (1.0 / n)
            return raw / norms * radii
        if self.direction_fn is not None:
            unit = np.asarray(self.direction_fn(x), dtype=float)
        elif self.direction is not None:
            unit = np.stack([compile_expr(e)(x) for e in self.direction], axis=-1)
        else:
            unit = grad(self.align_gradient_of, x)
        norms = np.linalg.norm(unit, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norms > 0, unit / norms, 0.0)
        return self.delta * unit

    def describe(self) -> dict:
        d = {"kind": self.kind, "delta": self.delta}
        if self.vector is not None:
            d["vector"] = self.vector.tolist()
        if self.kind == "piecewise_constant_random":
            d["seed"] = self.seed
        if self.direction is not None:
            d["direction"] = [to_string(e) for e in self.direction]
        if self.align_gradient_of is not None:
            d["align_gradient_of"] = to_string(self.align_gradient_of)
        if self.direction_fn is not None:
            d["direction_fn"] = "callable"
        return d


@dataclass
class Trajectory:
    """A simulated path with the disturbances that produced it.

    disturbances[k] is the value held over [times[k], times[k+1]), so replaying
    the recorded inputs through the same stepper reproduces the states.
    """

    time_domain: str
    times: np.ndarray           # (K+1,)
    states: np.ndarray          # (K+1, n)
    disturbances: np.ndarray    # (K, n)
    delta: float
    step: float
    dwell: float
    blown_up: bool = False
    escape_time: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states lengths differ")
        if len(self.disturbances) != max(0, len(self.times) - 1):
            raise ValueError("need one disturbance per step")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.states, axis=-1)))

    def max_disturbance_norm(self) -> float:
        if len(self.disturbances) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.disturbances, axis=-1)))

    def header(self) -> dict:
        return {
            "schema": 1,
            "time_domain": self.time_domain,
            "step": self.step,
            "dwell": self.dwell,
            "delta": self.delta,
            "blown_up": self.blown_up,
            "escape_time": self.escape_time,
            **self.meta,
        }

    def to_csv(self) -> str:
        n = self.n
        head = "# " + json.dumps(self.header(), sort_keys=True)
        cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"d{i + 1}" for i in range(n)]
        lines = [head, ",".join(cols)]
        for k, (t, x) in enumerate(zip(self.times, self.states)):
            if k < len(self.disturbances):
                drow = [repr(float(v)) for v in self.disturbances[k]]
            else:
                drow = [""] * n
            lines.append(",".join([repr(float(t))] +
                                  [repr(float(v)) for v in x] + drow))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "header": self.header(),
            "times": self.times.tolist(),
            "states": self.states.tolist(),
            "disturbances": self.disturbances.tolist(),
        }, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Trajectory":
        d = json.loads(text)
        h = d["header"]
        meta = {k: v for k, v in h.items()
                if k not in ("schema", "time_domain", "step", "dwell", "delta",
                             "blown_up", "escape_time")}
        return Trajectory(
            time_domain=h["time_domain"],
            times=np.asarray(d["times"], dtype=float),
            states=np.asarray(d["states"], dtype=float),
            disturbances=np.asarray(d["disturbances"], dtype=float).reshape(
                len(d["times"]) - 1, -1),
            delta=h["delta"], step=h["step"], dwell=h["dwell"],
            blown_up=h["blown_up"], escape_time=h["escape_time"], meta=meta)


def _steps_for(horizon: float, step: float) -> int:
    k = int(round(horizon / step))
    if k < 1 or abs(k * step - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError(f"horizon {horizon} is not a multiple of step {step}")
    return k


def _dwell_steps(dwell: float, step: float) -> int:
    m = int(round(dwell / step))
    if m < 1 or abs(m * step - dwell) > 1e-9 * max(1.0, dwell):
        raise ValueError(f"step {step} does not divide the dwell {dwell}")
    return m


def _rk4_step(fv, x: np.ndarray, d: np.ndarray, h: float) -> np.ndarray:
    k1 = fv(x) + d
    k2 = fv(x + 0.5 * h * k1) + d
    k3 = fv(x + 0.5 * h * k2) + d
    k4 = fv(x + h * k3) + d
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(sys: SystemSpec, x0, policy: DisturbancePolicy, horizon: float,
             step: float = 1e-3, dwell: Optional[float] = None,
             rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Run one trajectory and record states and applied disturbances.

    Continuous systems use RK4 with the disturbance held constant over each
    dwell interval (default 10 steps).  Discrete systems ignore `step` and
    treat horizon and dwell as integer step counts.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},)")
    if rng is None:
        rng = np.random.default_rng(policy.seed)

    if sys.time_domain == "discrete":
        step_eff, dwell_eff = 1.0, float(max(1, int(dwell or 1)))
        n_steps = int(round(horizon))
        if n_steps < 1:
            raise ValueError("discrete horizon must be a positive integer")
        per_dwell = int(dwell_eff)
    else:
        step_eff = float(step)
        dwell_eff = float(dwell) if dwell is not None else 10.0 * step_eff
        n_steps = _steps_for(float(horizon), step_eff)
        per_dwell = _dwell_steps(dwell_eff, step_eff)

    fv = sys.f_vec
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, sys.n))
    dists = np.empty((n_steps, sys.n))
    times[0], states[0] = 0.0, x0
    blown, escape = False, None

    x = x0.copy()
    d = np.zeros(sys.n)
    k_used = 0
    with np.errstate(all="ignore"):
        for k in range(n_steps):
            if k % per_dwell == 0:
                d = policy.draw(x[None, :], rng)[0]
            if sys.time_domain == "discrete":
                x = fv(x[None, :])[0] + d
                t_next = float(k + 1)
            else:
                x = _rk4_step(fv, x[None, :], d[None, :], step_eff)[0]
                t_next = (k + 1) * step_eff
            times[k + 1], states[k + 1], dists[k] = t_next, x, d
            k_used = k + 1
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) >= BLOWUP_NORM:
                blown, escape = True, t_next
                break

    sl = k_used + 1
    return Trajectory(
        time_domain=sys.time_domain,
        times=times[:sl], states=states[:sl], disturbances=dists[:sl - 1],
        delta=policy.delta, step=step_eff, dwell=dwell_eff,
        blown_up=blown, escape_time=escape,
        meta={"policy": policy.describe(), "system": sys.source})


def replay_states(sys: SystemSpec, traj: Trajectory) -> np.ndarray:
    """Recompute states from the recorded disturbances with the same stepper."""
    fv = sys.f_vec
    out = np.empty_like(traj.states)
    out[0] = traj.states[0]
    x = traj.states[0].copy()
    with np.errstate(all="ignore"):
        for k, d in enumerate(traj.disturbances):
            if sys.time_domain == "discrete":
                x = fv(x[None, :])[0] + d
            else:
                h = traj.times[k + 1] - traj.times[k]
                x = _rk4_step(fv, x[None, :], d[None, :], h)[0]
            out[k + 1] = x
    return out


@dataclass
class BatchRollout:
    final_states: np.ndarray   # (B, n)
    blown: np.ndarray          # (B,) bool
    escape_times: np.ndarray   # (B,) nan where not blown
    times_evaluated: int


def rollout_batch(sys: SystemSpec, x0s: np.ndarray, policy: DisturbancePolicy,
                  horizon: float, step: float = 1e-2, dwell: Optional[float] = None,
                  rng: Optional[np.random.Generator] = None,
                  observer: Optional[Callable[[float, np.ndarray, np.ndarray], None]] = None
                  ) -> BatchRollout:
    """Simulate many trajectories at once without storing full paths.

    `observer(t, states, alive)` is called after every step with the current
    batch; frozen (blown-up) rows keep their last finite state and alive=False.
    """
    x0s = np.asarray(x0s, dtype=float)
    if x0s.ndim != 2 or x0s.shape[1] != sys.n:
        raise ValueError(f"x0s must have shape (B, {sys.n})")
    if rng is None:
        rng = np.random.default_rng(policy.seed)

    if sys.time_domain == "discrete":
        n_steps = int(round(horizon))
        per_dwell = int(max(1, int(dwell or 1)))
        step_eff = 1.0
    else:
        step_eff = float(step)
        dwell_eff = float(dwell) if dwell is not None else 10.0 * step_eff
        n_steps = _steps_for(float(horizon), step_eff)
        per_dwell = _dwell_steps(dwell_eff, step_eff)

    B = x0s.shape[0]
    x = x0s.copy()
    alive = np.ones(B, dtype=bool)
    escape = np.full(B, np.nan)
    d = np.zeros_like(x)
    fv = sys.f_vec

    if observer is not None:
        observer(0.0, x, alive)

    with np.errstate(all="ignore"):
        for k in range(n_steps):
            if not np.any(alive):
                break
            if k % per_dwell == 0:
                d[alive] = policy.draw(x[alive], rng)
            if sys.time_domain == "discrete":
                x_new = fv(x[alive]) + d[alive]
                t_next = float(k + 1)
            else:
                x_new = _rk4_step(fv, x[alive], d[alive], step_eff)
                t_next = (k + 1) * step_eff
            bad = ~np.all(np.isfinite(x_new), axis=-1) | \
                (np.linalg.norm(x_new, axis=-1) >= BLOWUP_NORM)
            idx = np.flatnonzero(alive)
            x[idx[~bad]] = x_new[~bad]
            if np.any(bad):
                # keep the pre-escape state, mark the escape time
                escape[idx[bad]] = t_next
                alive[idx[bad]] = False
            if observer is not None:
                observer(t_next, x, alive)

    return BatchRollout(final_states=x, blown=~np.isnan(escape),
                        escape_times=escape, times_evaluated=n_steps)


def estimate_lipschitz(sys: SystemSpec, box: IntervalBox, samples: int = 10000,
                       rng: Optional[np.random.Generator] = None) -> float:
    """Sampled Lipschitz bound for f on a box, inflated by a 1.1 safety factor.

    Returns the max of the sampled estimate and the system's declared hint.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if box.n != sys.n:
        raise ValueError("box dimension does not match the system")
    X = box.sample(rng, samples)
    Y = box.sample(rng, samples)
    dx = np.linalg.norm(X - Y, axis=-1)
    keep = dx > 0
    df = np.linalg.norm(sys.f_vec(X[keep]) - sys.f_vec(Y[keep]), axis=-1)
    est = 1.1 * float(np.max(df / dx[keep])) if np.any(keep) else 0.0
    if sys.lipschitz_hint is not None:
        return max(est, float(sys.lipschitz_hint))
    return est
