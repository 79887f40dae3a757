"""Reachable sets of perturbed systems on uniform grids.

reach_over produces a grid covering every state reachable from W under any
disturbance with |d| <= delta.  Three strategies are used:

* continuous 1-d: the reach set of a connected seed stays an interval, and
  its endpoints follow the extremal flows x' = f(x) +/- delta (comparison
  principle).  Endpoints are integrated with an adaptive RK solver and the
  running extrema are rasterised outward onto the grid.
* continuous n-d: frontier BFS.  Each member cell is advected one dwell
  by an Euler step of its center and covered by a ball whose radius grows
  by the disturbance travel and a locally sampled Lipschitz inflation.
* discrete: frontier BFS with a rigorous interval-arithmetic image of each
  cell, widened by delta per axis.

The n-d inflation constants are sampled estimates, not certified bounds; the
returned grid records the construction parameters in its provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .dynamics import (DisturbancePolicy, SystemSpec, Trajectory, _rk4_step,
                       rollout_batch)
from .exprlang import eval_interval
from .grids import BOUNDARY, IN, OUT, DistanceField, GridSet
from .intervals import IntervalBox
from .regions import RegionSpec

_LOCAL_LIP_SAFETY = 1.25
_FLOW_HORIZON = 400.0


def _seed_grid(W, domain: IntervalBox, resolution: float, delta: float,
               flag: str = "over") -> GridSet:
    if isinstance(W, GridSet):
        gs = GridSet.empty_like_domain(domain, resolution, flag=flag, delta=delta)
        if gs.shape == W.shape and gs.domain == W.domain:
            gs.cells = W.cells.copy()
        else:
            centers = W.member_centers()
            idx, valid = gs.locate(centers)
            for i, ok in zip(idx, valid):
                if ok:
                    gs.cells[tuple(i)] = max(gs.cells[tuple(i)], BOUNDARY)
        return gs
    return GridSet.from_region(W, domain, resolution, flag=flag, delta=delta)


def reach_over(sys: SystemSpec, W: Union[RegionSpec, GridSet], delta: float,
               domain: IntervalBox, resolution: float,
               step: Optional[float] = None, dwell: Optional[float] = None,
               flow_horizon: float = _FLOW_HORIZON) -> GridSet:
    """Over-approximate the reachable set of W under all |d| <= delta.

    The result is flagged "over": the union of its member cells contains the
    true reach set up to the documented estimation tolerances.  If the set
    presses against the domain boundary the grid is marked escaped and is not
    valid as an over-approximation.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if domain.n != sys.n:
        raise ValueError("domain dimension does not match the system")
    grid = _seed_grid(W, domain, resolution, delta, flag="over")
    grid.provenance.update({
        "kind": "reach_over", "delta": delta, "resolution": resolution,
        "time_domain": sys.time_domain, "system": sys.source,
    })
    if grid.is_empty():
        return grid
    if sys.time_domain == "continuous" and sys.n == 1:
        return _reach_over_1d_flow(sys, grid, delta, flow_horizon)
    if sys.time_domain == "continuous":
        return _reach_over_ball_bfs(sys, grid, delta, step, dwell)
    return _reach_over_discrete_bfs(sys, grid, delta)


def _member_runs_1d(grid: GridSet) -> list[tuple[int, int]]:
    """Maximal runs [i0, i1] of consecutive member cells."""
    mask = grid.member_mask.ravel()
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _extremal_sweep(sys: SystemSpec, x0: float, sign: float, delta: float,
                    domain: IntervalBox, horizon: float) -> tuple[float, bool]:
    """Integrate x' = f(x) + sign*delta and return the extremum in `sign`
    direction over [0, horizon], plus whether the domain edge was reached."""
    lo, hi = float(domain.lo[0]), float(domain.hi[0])
    fv = sys.f_vec

    def rhs(t, x):
        return fv(x.reshape(1, 1))[0] + sign * delta

    def hit_edge(t, x):
        return (hi - x[0]) if sign > 0 else (x[0] - lo)

    hit_edge.terminal = True
    sol = solve_ivp(rhs, (0.0, horizon), [x0], dense_output=True,
                    rtol=1e-9, atol=1e-12, events=hit_edge)
    ts = np.linspace(0.0, sol.t[-1], 100001)
    xs = sol.sol(ts)[0]
    extreme = float(np.max(xs)) if sign > 0 else float(np.min(xs))
    escaped = bool(sol.t_events[0].size)
    if escaped:
        extreme = hi if sign > 0 else lo
    return extreme, escaped


def _reach_over_1d_flow(sys: SystemSpec, grid: GridSet, delta: float,
                        horizon: float) -> GridSet:
    w = float(grid.widths[0])
    dom_lo, dom_hi = float(grid.domain.lo[0]), float(grid.domain.hi[0])
    m = grid.shape[0]
    out = np.zeros(m, dtype=np.int8)
    escaped = False
    for i0, i1 in _member_runs_1d(grid):
        face_lo = dom_lo + i0 * w
        face_hi = dom_lo + (i1 + 1) * w
        sup, esc_hi = _extremal_sweep(sys, face_hi, +1.0, delta, grid.domain, horizon)
        inf, esc_lo = _extremal_sweep(sys, face_lo, -1.0, delta, grid.domain, horizon)
        escaped = escaped or esc_hi or esc_lo
        j0 = int(np.clip(np.floor((inf - dom_lo) / w + 1e-12), 0, m - 1))
        j1 = int(np.clip(np.ceil((sup - dom_lo) / w - 1e-12) - 1, 0, m - 1))
        out[j0:j1 + 1] = np.maximum(out[j0:j1 + 1], BOUNDARY)
        if j1 - j0 >= 2:
            out[j0 + 1:j1] = IN
    result = grid.copy()
    result.cells = out.reshape(grid.shape)
    result.escaped = escaped
    result.provenance["method"] = "extremal_endpoint_flow"
    result.provenance["flow_horizon"] = horizon
    return result


def _local_lipschitz(sys: SystemSpec, Z: np.ndarray, F: np.ndarray,
                     inflate: np.ndarray) -> np.ndarray:
    """Sampled per-cell Lipschitz constants over cells inflated by `inflate`."""
    m, n = Z.shape
    L = np.zeros(m)
    for j in range(n):
        for sgn in (-1.0, 1.0):
            P = Z.copy()
            P[:, j] += sgn * inflate
            slope = np.linalg.norm(sys.f_vec(P) - F, axis=-1) / inflate
            L = np.maximum(L, slope)
    return _LOCAL_LIP_SAFETY * L + 1e-9


def _mark_ball(grid: GridSet, cells: np.ndarray, target: np.ndarray, rho: float,
               new_cells: list) -> bool:
    """Mark all cells intersecting a ball; returns True if it leaves the domain."""
    lo_idx, _ = grid.locate(np.maximum(target - rho, grid.domain.lo))
    hi_idx, _ = grid.locate(np.minimum(target + rho, grid.domain.hi))
    ranges = [np.arange(lo_idx[i], hi_idx[i] + 1) for i in range(grid.n)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([g.ravel() for g in mesh], axis=-1)
    if idx.size:
        cell_lo = grid.domain.lo + idx * grid.widths
        cell_hi = cell_lo + grid.widths
        nearest = np.clip(target, cell_lo, cell_hi)
        hit = np.linalg.norm(nearest - target, axis=-1) <= rho
        for row in idx[hit]:
            t = tuple(int(v) for v in row)
            if cells[t] == OUT:
                cells[t] = BOUNDARY
                new_cells.append(t)
    return bool(np.any(target - rho < grid.domain.lo)
                or np.any(target + rho > grid.domain.hi))


def _reach_over_ball_bfs(sys: SystemSpec, grid: GridSet, delta: float,
                         step: Optional[float], dwell: Optional[float]) -> GridSet:
    res = float(np.min(grid.widths))
    h = float(step) if step is not None else res / 2.0
    dw = float(dwell) if dwell is not None else 10.0 * h
    half_diag = grid.half_diag
    cells = grid.cells.copy()
    frontier = [tuple(int(v) for v in row) for row in np.argwhere(grid.member_mask)]
    escaped = False
    while frontier:
        idx = np.asarray(frontier, dtype=float)
        Z = grid.domain.lo + (idx + 0.5) * grid.widths
        F = sys.f_vec(Z)
        M = np.linalg.norm(F, axis=-1)
        inflate = half_diag + dw * (M + delta)
        L = _local_lipschitz(sys, Z, F, inflate)
        growth = np.exp(L * dw)
        rho = growth * (half_diag + delta * dw + 0.5 * L * dw * dw * M) + 1e-12
        targets = Z + dw * F
        new_cells: list = []
        for t, r in zip(targets, rho):
            escaped |= _mark_ball(grid, cells, t, float(r), new_cells)
        frontier = new_cells
    out = grid.copy()
    out.cells = cells
    out.escaped = escaped
    out.provenance["method"] = "ball_bfs"
    out.provenance.update({"step": h, "dwell": dw})
    return out


def _reach_over_discrete_bfs(sys: SystemSpec, grid: GridSet, delta: float) -> GridSet:
    cells = grid.cells.copy()
    frontier = [tuple(int(v) for v in row) for row in np.argwhere(grid.member_mask)]
    escaped = False
    m_shape = np.asarray(grid.shape)
    while frontier:
        new_cells: list = []
        for t in frontier:
            box = grid.cell_box(np.asarray(t))
            ivs = [eval_interval(e, box) for e in sys.f]
            img_lo = np.array([iv.lo for iv in ivs]) - delta
            img_hi = np.array([iv.hi for iv in ivs]) + delta
            escaped |= bool(np.any(img_lo < grid.domain.lo)
                            or np.any(img_hi > grid.domain.hi))
            lo_idx, _ = grid.locate(np.maximum(img_lo, grid.domain.lo))
            hi_idx, _ = grid.locate(np.minimum(img_hi, grid.domain.hi))
            ranges = [np.arange(lo_idx[i], hi_idx[i] + 1) for i in range(grid.n)]
            mesh = np.meshgrid(*ranges, indexing="ij")
            idx = np.stack([g.ravel() for g in mesh], axis=-1)
            for row in idx:
                tt = tuple(int(v) for v in row)
                if cells[tt] == OUT:
                    cells[tt] = BOUNDARY
                    new_cells.append(tt)
        frontier = new_cells
    out = grid.copy()
    out.cells = cells
    out.escaped = escaped
    out.provenance["method"] = "interval_image_bfs"
    return out


def reach_under(sys: SystemSpec, W: RegionSpec, delta: float, domain: IntervalBox,
                resolution: float, budget: int = 200, horizon: float = 20.0,
                step: float = 1e-2, dwell: Optional[float] = None,
                seed: int = 0) -> GridSet:
    """Under-approximate the reach set by cells visited by sampled trajectories.

    Seeds are the cells provably inside W; a zero budget returns exactly those.
    The budget is split between random piecewise-constant policies and
    extremal policies (outward radial and constant coordinate directions).
    """
    grid = _seed_grid(W, domain, resolution, delta, flag="under")
    grid.provenance.update({
        "kind": "reach_under", "delta": delta, "resolution": resolution,
        "budget": budget, "horizon": horizon, "seed": seed,
        "time_domain": sys.time_domain, "system": sys.source,
    })
    if budget <= 0 or grid.is_empty():
        return grid

    rng = np.random.default_rng(seed)
    seeds = grid.member_centers()
    centroid = seeds.mean(axis=0)

    def sample_x0(count: int) -> np.ndarray:
        take = seeds[rng.integers(0, len(seeds), size=count)]
        jitter = rng.uniform(-0.5, 0.5, size=take.shape) * grid.widths
        x0 = take + jitter
        inside = W.contains(x0) if isinstance(W, RegionSpec) else grid.member_of(x0)
        x0[~inside] = take[~inside]
        return x0

    def radial(x):
        vec = x - centroid
        norms = np.linalg.norm(vec, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(norms > 0, vec / norms, 0.0)

    policies = [DisturbancePolicy.random(delta, seed=seed),
                DisturbancePolicy.extremal(delta, direction_fn=radial)]
    for j in range(sys.n):
        for sgn in (1.0, -1.0):
            v = np.zeros(sys.n)
            v[j] = sgn * delta
            policies.append(DisturbancePolicy.constant(v, delta=delta))

    cells = grid.cells.copy()

    def observer(t, states, alive):
        pts = states[alive]
        if pts.size == 0:
            return
        idx, valid = grid.locate(pts)
        for i, ok in zip(idx, valid):
            if ok:
                t_i = tuple(int(v) for v in i)
                if cells[t_i] == OUT:
                    cells[t_i] = BOUNDARY

    per = max(1, budget // len(policies))
    for k, pol in enumerate(policies):
        rollout_batch(sys, sample_x0(per), pol, horizon, step=step, dwell=dwell,
                      rng=np.random.default_rng(seed * 7919 + k), observer=observer)
    out = grid.copy()
    out.cells = cells
    return out


@dataclass
class SafetyReport:
    verdict: str  # safe | unsafe | unknown
    witness_cells: list = field(default_factory=list)
    witness_points: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "witness_cells": self.witness_cells,
                "witness_points": self.witness_points, "notes": self.notes}


def check_safety(reach: GridSet, U: RegionSpec,
                 under: Optional[GridSet] = None) -> SafetyReport:
    """Decide safety against U from an over-approximation.

    safe: no over-approximation cell can intersect U.  unsafe: requires an
    under-approximation cell provably inside U.  Anything else is unknown.
    """
    if U.is_syntactically_empty:
        return SafetyReport("safe", notes=["unsafe set is empty"])
    if reach.flag != "over":
        raise ValueError("check_safety needs an over-approximation grid")
    U.check_dimension(reach.n)
    if reach.escaped:
        return SafetyReport("unknown", notes=[
            "reach set pressed against the domain boundary; over-approximation invalid"])
    touching = []
    for idx in np.argwhere(reach.member_mask):
        rel = U.classify_cell(reach.cell_box(idx))
        if rel != "outside":
            touching.append(tuple(int(v) for v in idx))
    if not touching:
        return SafetyReport("safe")
    notes = [f"{len(touching)} reachable cells may intersect U"]
    if under is not None:
        witnesses = []
        for idx in np.argwhere(under.member_mask):
            if U.classify_cell(under.cell_box(idx)) == "inside":
                witnesses.append(tuple(int(v) for v in idx))
        if witnesses:
            pts = [under.index_centers(np.asarray(w)).tolist() for w in witnesses[:8]]
            return SafetyReport("unsafe", witness_cells=witnesses[:64],
                                witness_points=pts,
                                notes=notes + ["under-approximation reaches U"])
        notes.append("no under-approximation witness found")
    else:
        notes.append("no under-approximation supplied")
    return SafetyReport("unknown", witness_cells=touching[:64], notes=notes)


@dataclass
class Assumption1Report:
    holds: bool
    disjoint: bool
    bounded: bool
    clearance: float
    omega: GridSet
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"holds": self.holds, "disjoint": self.disjoint,
                "bounded": self.bounded, "clearance": self.clearance,
                "notes": self.notes}


def check_assumption1(reach: GridSet, U: RegionSpec,
                      dilate_layers: int = 1) -> Assumption1Report:
    """Check that Omega = closure(reach(W)) is bounded and disjoint from U.

    The closure is approximated by dilating the reach grid by one cell layer.
    Clearance is the minimum center distance between Omega cells and cells
    possibly in U, reduced by one cell diagonal (0 if the sets touch).
    """
    if reach.flag != "over":
        raise ValueError("check_assumption1 needs an over-approximation grid")
    U.check_dimension(reach.n)
    omega = reach.dilated(dilate_layers)
    notes = []
    bounded = not reach.escaped and not omega.touches_domain_edge()
    if reach.escaped:
        notes.append("reach set escaped the analysis domain")
    elif omega.touches_domain_edge():
        notes.append("closure touches the analysis domain boundary")

    if U.is_syntactically_empty:
        notes.append("unsafe set is empty; disjointness holds vacuously")
        return Assumption1Report(holds=bounded, disjoint=True, bounded=bounded,
                                 clearance=float("inf"), omega=omega, notes=notes)

    u_mask = _rasterize_region_mask(U, omega)
    if not np.any(u_mask):
        notes.append("unsafe set has no cells inside the analysis domain; "
                     "disjointness holds vacuously within it")
        return Assumption1Report(holds=bounded, disjoint=True, bounded=bounded,
                                 clearance=float("inf"), omega=omega, notes=notes)

    overlap = bool(np.any(u_mask & omega.member_mask))
    omega_centers = omega.member_centers()
    u_centers = omega.domain.lo + (np.argwhere(u_mask) + 0.5) * omega.widths
    dmin = float(np.min(cKDTree(u_centers).query(omega_centers)[0]))
    clearance = max(0.0, dmin - 2.0 * omega.half_diag)
    disjoint = not overlap and clearance > 0.0
    if overlap:
        notes.append("closure overlaps cells possibly in U")
        clearance = 0.0
    return Assumption1Report(holds=bounded and disjoint, disjoint=disjoint,
                             bounded=bounded, clearance=clearance, omega=omega,
                             notes=notes)


def _rasterize_region_mask(region: RegionSpec, grid: GridSet) -> np.ndarray:
    """Cells of the grid that may intersect the region."""
    mask = np.zeros(grid.shape, dtype=bool)
    bb = region.bounding_box(fallback=grid.domain)
    if bb is None:
        return mask
    lo = np.maximum(bb.lo, grid.domain.lo)
    hi = np.minimum(bb.hi, grid.domain.hi)
    if np.any(lo > hi):
        return mask
    lo_idx, _ = grid.locate(lo + 1e-12 * grid.widths)
    hi_idx, _ = grid.locate(hi - 1e-12 * grid.widths)
    ranges = [np.arange(lo_idx[i], hi_idx[i] + 1) for i in range(grid.n)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([g.ravel() for g in mesh], axis=-1)
    for row in idx:
        t = tuple(int(v) for v in row)
        if region.classify_cell(grid.cell_box(np.asarray(t))) != "outside":
            mask[t] = True
    return mask


@dataclass
class InvarianceReport:
    consistent: bool
    trials: int
    violations: int
    witness: Optional[Trajectory] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"consistent": self.consistent, "trials": self.trials,
                "violations": self.violations, "notes": self.notes,
                "witness": None if self.witness is None else self.witness.header()}


def check_invariance(sys: SystemSpec, omega: GridSet, delta: float,
                     trials: int = 200, horizon: float = 10.0, step: float = 1e-2,
                     dwell: Optional[float] = None, seed: int = 0) -> InvarianceReport:
    """Empirically test robust invariance of a grid set.

    Trajectories start in member cells near the set boundary under random and
    outward-extremal policies; a violation is any state entering a non-member
    cell.  Consistency is evidence, not proof.
    """
    if omega.is_empty():
        return InvarianceReport(True, 0, 0, notes=["empty set is trivially invariant"])
    rng = np.random.default_rng(seed)
    field_ = DistanceField(omega)
    b_idx = omega.boundary_member_indices()
    centers = omega.index_centers(b_idx)

    def sample_x0(count: int) -> np.ndarray:
        take = centers[rng.integers(0, len(centers), size=count)]
        jitter = rng.uniform(-0.5, 0.5, size=take.shape) * omega.widths
        x0 = take + jitter
        bad = ~omega.member_of(x0)
        x0[bad] = take[bad]
        return x0

    policies = [DisturbancePolicy.random(delta, seed=seed),
                DisturbancePolicy.extremal(delta, direction_fn=field_.outward_direction)]
    per = max(1, trials // len(policies))
    total = violations = 0
    witness = None
    notes: list = []

    for k, pol in enumerate(policies):
        x0s = sample_x0(per)
        total += per
        hits: list = []

        def observer(t, states, alive):
            inside = omega.member_of(states)
            bad = alive & ~inside
            if np.any(bad) and not hits:
                row = int(np.flatnonzero(bad)[0])
                hits.append((row, t, states[row].copy()))

        rng_k = np.random.default_rng(seed * 7919 + k)
        rollout_batch(sys, x0s, pol, horizon, step=step, dwell=dwell,
                      rng=rng_k, observer=observer)
        if hits:
            violations += 1
            if witness is None:
                row = hits[0][0]
                witness = _replay_single_row(sys, x0s, pol, horizon, step, dwell,
                                             np.random.default_rng(seed * 7919 + k), row)
                notes.append(f"first exit at t={hits[0][1]:.6g}, "
                             f"state={hits[0][2].tolist()}, policy={pol.kind}")
    return InvarianceReport(consistent=violations == 0, trials=total,
                            violations=violations, witness=witness, notes=notes)


def _replay_single_row(sys, x0s, policy, horizon, step, dwell, rng, row) -> Trajectory:
    """Re-run a batch with the same stream, recording one row as a Trajectory."""
    times, states, dists = [], [], []

    x0s = np.asarray(x0s, dtype=float)
    if sys.time_domain == "discrete":
        n_steps = int(round(horizon))
        per_dwell = int(max(1, int(dwell or 1)))
        h = 1.0
    else:
        h = float(step)
        dw = float(dwell) if dwell is not None else 10.0 * h
        n_steps = int(round(horizon / h))
        per_dwell = int(round(dw / h))
    x = x0s.copy()
    alive = np.ones(len(x0s), dtype=bool)
    d = np.zeros_like(x)
    times.append(0.0)
    states.append(x[row].copy())
    with np.errstate(all="ignore"):
        for k in range(n_steps):
            if not alive[row]:
                break
            if k % per_dwell == 0:
                d[alive] = policy.draw(x[alive], rng)
            if sys.time_domain == "discrete":
                x_new = sys.f_vec(x[alive]) + d[alive]
                t_next = float(k + 1)
            else:
                x_new = _rk4_step(sys.f_vec, x[alive], d[alive], h)
                t_next = (k + 1) * h
            bad = ~np.all(np.isfinite(x_new), axis=-1) | \
                (np.linalg.norm(x_new, axis=-1) >= 1e6)
            idx_alive = np.flatnonzero(alive)
            x[idx_alive[~bad]] = x_new[~bad]
            alive[idx_alive[bad]] = False
            if alive[row] or (row in idx_alive[bad]):
                times.append(t_next)
                states.append(x[row].copy())
                dists.append(d[row].copy())
    return Trajectory(time_domain=sys.time_domain,
                      times=np.asarray(times), states=np.asarray(states),
                      disturbances=np.asarray(dists).reshape(len(times) - 1, -1),
                      delta=policy.delta, step=h,
                      dwell=float(dwell) if dwell else (10.0 * h if sys.time_domain == "continuous" else 1.0),
                      meta={"policy": policy.describe(), "system": sys.source,
                            "witness_row": row})
