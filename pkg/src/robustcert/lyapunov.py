"""Set-stability certificates for perturbed systems.

A certificate consists of a scalar function V, a target cell set A, a
verification box D and three monomial class-K comparison functions.  The
three checked conditions are

    (1)  alpha1(s) <= V(x) <= alpha2(s)      with s the grid distance to A,
    (2)  worst-case decrease along the dynamics, reduced for continuous
         time to  grad V . f + delta' ||grad V|| <= -alpha3(s)  and for
         discrete time to  max_d V(f(x)+d) - V(x) <= -alpha3(s),
    (3)  the comparison functions are class K (monomials a*s^p enforce it).

Distances are measured against cell centers (Euclidean distance minus half
a cell diagonal, clamped at zero), so condition (1) carries a one-cell
slack and condition (2) is verified outside a small inner band where the
clamped distance vanishes identically.  Margins on cells are center values
minus an estimated local Lipschitz constant times the cell radius; the
estimate comes from lattice differences and is reported, not proven.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from .exprlang import (Expr, Num, Var, Bin, Pow, Call, parse, to_string,
                       eval_expr, grad, eval_interval, grad_interval)
from .intervals import Interval, IntervalBox
from .grids import GridSet, DistanceField
from .dynamics import (SystemSpec, DisturbancePolicy, Trajectory, simulate,
                       rollout_batch, estimate_lipschitz)

__all__ = [
    "ClassKFn", "LyapunovCertificate", "VerifyResult", "RuasReport",
    "SynthesisError", "synthesize_V", "verify_V", "check_ruas_empirical",
]

_LIP_SAFETY = 1.25          # inflation on lattice-estimated Lipschitz constants
_ALPHA3_SAFETY = 0.75       # fitted decrease rate backs off from the observed minimum
_MARGIN_FLOOR = 1e-9


class SynthesisError(RuntimeError):
    """No candidate achieved positive margins; carries the best attempt."""

    def __init__(self, message: str, margins: Optional[dict] = None):
        super().__init__(message)
        self.margins = dict(margins or {})


@dataclass(frozen=True)
class ClassKFn:
    """Monomial class-K function a * s**p on [0, s_max]."""

    a: float
    p: float
    s_max: float = math.inf

    def __post_init__(self):
        if not (self.a > 0):
            raise ValueError("class-K coefficient a must be positive")
        if not (self.p >= 1):
            raise ValueError("class-K exponent p must be >= 1")
        if not (self.s_max > 0):
            raise ValueError("class-K domain bound must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.s_max * (1 + 1e-9) + 1e-12):
            raise ValueError(f"argument outside class-K domain [0, {self.s_max}]")
        out = self.a * np.clip(s, 0.0, None) ** self.p
        return float(out) if out.ndim == 0 else out

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        vmax = self.a * self.s_max ** self.p if math.isfinite(self.s_max) else math.inf
        if np.any(v < -1e-12) or np.any(v > vmax * (1 + 1e-9) + 1e-12):
            raise ValueError("value outside the range of this class-K function")
        out = (np.clip(v, 0.0, None) / self.a) ** (1.0 / self.p)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        d = {"a": self.a, "p": self.p}
        if math.isfinite(self.s_max):
            d["s_max"] = self.s_max
        return d


# ---------------------------------------------------------------------------
# candidate evaluators


class _SmoothedCandidate:
    """V = (smoothplus(dist; kappa) - smoothplus(0; kappa))^2.

    dist is the clamped center distance to the cell set, so V vanishes
    identically on the set, is C^1 across the clamp (the kink is multiplied
    by a zero factor) and is strictly increasing in the distance.
    """

    kind = "smoothed_distance"

    def __init__(self, A: GridSet, kappa: float):
        if A.is_empty():
            raise ValueError("candidate needs a nonempty cell set")
        if not (kappa > 0):
            raise ValueError("kappa must be positive")
        self.A = A
        self.kappa = float(kappa)
        self.field = DistanceField(A)
        self.sp0 = math.log(2.0) / self.kappa

    # scalar profile in the distance d >= 0 (both monotone increasing)
    def g_of_d(self, d):
        d = np.asarray(d, dtype=float)
        return np.logaddexp(0.0, self.kappa * d) / self.kappa - self.sp0

    def value_of_d(self, d):
        return self.g_of_d(d) ** 2

    def gmag_of_d(self, d):
        d = np.asarray(d, dtype=float)
        return 2.0 * self.g_of_d(d) * expit(self.kappa * d)

    def dist(self, x: np.ndarray) -> np.ndarray:
        return self.field.distance(x)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.value_of_d(self.dist(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        d = self.dist(x)
        u = self.field.outward_direction(x)
        return self.gmag_of_d(d)[..., None] * u

    def value_interval(self, box: IntervalBox) -> Interval:
        # boxes covered by member cells sit on the zero plateau exactly;
        # elsewhere the clamped distance is 1-Lipschitz around the center
        if self.A.covers_box(box):
            return Interval(0.0, 0.0)
        d0 = float(self.dist(box.center))
        r = float(np.linalg.norm(box.radius))
        lo = float(self.value_of_d(max(0.0, d0 - r)))
        hi = float(self.value_of_d(d0 + r))
        return Interval(lo, hi)

    def expr(self) -> Expr:
        dist_e = _distance_expr(self.A)
        sp = Call("smoothplus", (dist_e, Num(self.kappa)))
        return Pow(Bin("-", sp, Num(self.sp0)), 2)


def _min_tree(exprs: list) -> Expr:
    while len(exprs) > 1:
        nxt = [Call("min", (exprs[i], exprs[i + 1]))
               for i in range(0, len(exprs) - 1, 2)]
        if len(exprs) % 2:
            nxt.append(exprs[-1])
        exprs = nxt
    return exprs[0]


def _distance_expr(A: GridSet, center_cap: int = 4096) -> Expr:
    """Closed form of the clamped center distance as an expression.

    1-D sets use their member runs exactly.  Higher dimensions use a min
    tree over member centers, restricted to boundary centers above the cap
    (exact outside the set, positive deep inside it).
    """
    hd = A.half_diag
    if A.n == 1:
        w = float(A.widths[0])
        lo = float(A.domain.lo[0])
        runs = []
        mask = A.member_mask.ravel()
        idx = np.flatnonzero(mask)
        splits = np.flatnonzero(np.diff(idx) > 1)
        for chunk in np.split(idx, splits + 1):
            c0 = lo + (chunk[0] + 0.5) * w
            c1 = lo + (chunk[-1] + 0.5) * w
            runs.append(Call("max", (Bin("-", Num(c0), Var(0)),
                                     Bin("-", Var(0), Num(c1)))))
        return Call("max", (Bin("-", _min_tree(runs), Num(hd)), Num(0.0)))
    centers = A.member_centers()
    if centers.shape[0] > center_cap:
        centers = A.index_centers(A.boundary_member_indices())
    terms = []
    for c in centers:
        sq = None
        for i, ci in enumerate(c):
            t = Pow(Bin("-", Var(i), Num(float(ci))), 2)
            sq = t if sq is None else Bin("+", sq, t)
        terms.append(Call("sqrt", (sq,)))
    return Call("max", (Bin("-", _min_tree(terms), Num(hd)), Num(0.0)))


class _ExprCandidate:
    """Candidate given in closed form; gradients via forward AD."""

    kind = "expression"

    def __init__(self, expr, A: GridSet):
        self.e = parse(expr) if isinstance(expr, str) else expr
        self.A = A
        self.field = DistanceField(A)

    def dist(self, x: np.ndarray) -> np.ndarray:
        return self.field.distance(x)

    def value(self, x: np.ndarray) -> np.ndarray:
        return eval_expr(self.e, x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return grad(self.e, x)

    def value_interval(self, box: IntervalBox) -> Interval:
        return eval_interval(self.e, box)

    def expr(self) -> Expr:
        return self.e


@dataclass
class LyapunovCertificate:
    """Verified decrease certificate for a cell set A inside a box D."""

    V: Expr
    A: GridSet
    D: IntervalBox
    delta_prime: float
    alpha1: ClassKFn
    alpha2: ClassKFn
    alpha3: ClassKFn
    margins: dict
    basis: str
    time_domain: str
    resolution: float
    band: float
    kappa: Optional[float] = None
    notes: tuple = ()
    candidate: object = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.candidate is None:
            self.candidate = _ExprCandidate(self.V, self.A)

    def value(self, x) -> np.ndarray:
        return self.candidate.value(np.atleast_2d(np.asarray(x, dtype=float)))

    def to_json(self) -> str:
        doc = {
            "schema": 1,
            "kind": "lyapunov_certificate",
            "expression": to_string(self.V),
            "basis": self.basis,
            "time_domain": self.time_domain,
            "delta_prime": self.delta_prime,
            "alpha1": self.alpha1.to_dict(),
            "alpha2": self.alpha2.to_dict(),
            "alpha3": self.alpha3.to_dict(),
            "margins": {k: float(v) for k, v in sorted(self.margins.items())},
            "domain": {"lo": self.D.lo.tolist(), "hi": self.D.hi.tolist()},
            "resolution": self.resolution,
            "band": self.band,
            "grid": {"resolution": float(max(self.A.widths)),
                     "members": int(self.A.num_members),
                     "delta": self.A.delta},
            "notes": list(self.notes),
        }
        if self.kappa is not None:
            doc["kappa"] = self.kappa
        return json.dumps(doc, sort_keys=True, indent=2)


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    margins: dict
    failed_condition: Optional[str] = None
    failed_cell: Optional[tuple] = None
    failed_point: Optional[tuple] = None
    cells: int = 0
    notes: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# verification lattice


@dataclass(frozen=True)
class _Lattice:
    centers: np.ndarray   # (C, n)
    shape: tuple
    widths: np.ndarray
    rad: float            # half cell diagonal
    diag: float           # full cell diagonal

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def cell_index(self, flat: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(flat, self.shape))

    def cell_box(self, flat: int) -> IntervalBox:
        c = self.centers[flat]
        return IntervalBox(c - self.widths / 2, c + self.widths / 2)


def _lattice_over(D: IntervalBox, resolution: float) -> _Lattice:
    shape = tuple(max(1, int(round((hi - lo) / resolution)))
                  for lo, hi in zip(D.lo, D.hi))
    axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m
            for (lo, hi, m) in zip(D.lo, D.hi, shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=-1)
    widths = np.array([(hi - lo) / m for (lo, hi, m) in zip(D.lo, D.hi, shape)])
    rad = 0.5 * float(np.linalg.norm(widths))
    return _Lattice(centers, shape, widths, rad, 2.0 * rad)


def _local_slopes(values: np.ndarray, lat: _Lattice) -> np.ndarray:
    """Per-cell bound on |grad| of a lattice-sampled scalar field."""
    F = values.reshape(lat.shape)
    L = np.zeros(lat.shape)
    for ax, m in enumerate(lat.shape):
        if m < 2:
            continue
        d = np.abs(np.diff(F, axis=ax)) / lat.widths[ax]
        lo = [slice(None)] * len(lat.shape)
        hi = [slice(None)] * len(lat.shape)
        lo[ax] = slice(0, m - 1)
        hi[ax] = slice(1, m)
        np.maximum(L[tuple(lo)], d, out=L[tuple(lo)])
        np.maximum(L[tuple(hi)], d, out=L[tuple(hi)])
    return L.ravel()


def _gap_to_boundary(A: GridSet, D: IntervalBox) -> float:
    bb = A.member_bounding_box()
    if bb is None:
        raise ValueError("cell set has no members")
    gaps = np.minimum(bb.lo - D.lo, D.hi - bb.hi)
    return float(np.min(gaps))


def _inner_band(A: GridSet, D: IntervalBox, lat: _Lattice) -> float:
    return max(3.0 * lat.diag, 0.25 * _gap_to_boundary(A, D))


def _ball_directions(n: int, count: int = 32) -> np.ndarray:
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(max(count, 4 * n), n))
    raw = np.vstack([raw, np.eye(n), -np.eye(n)])
    return raw / np.linalg.norm(raw, axis=-1, keepdims=True)


def _chord_gap(n: int, delta: float, count: int = 32) -> float:
    # covering radius of the sampled directions on the delta-sphere
    if n == 1:
        return 0.0
    if n == 2:
        return delta * math.sin(math.pi / count)
    return 0.5 * delta


def _decrease_centers(cand, sys: SystemSpec, delta_prime: float,
                      lat: _Lattice) -> np.ndarray:
    """Worst-case decrease margin source at cell centers.

    Continuous time returns -(grad V . f + delta' ||grad V||); discrete
    time returns V(x) - max_d V(f(x)+d) with boundary-sampled d and a
    chord correction.  Positive values mean V strictly decreases.
    """
    X = lat.centers
    if sys.time_domain == "continuous":
        G = cand.gradient(X)
        F = sys.f_vec(X)
        drive = np.einsum("ij,ij->i", G, F)
        return -(drive + delta_prime * np.linalg.norm(G, axis=-1))
    V0 = cand.value(X)
    img = sys.f_vec(X)
    worst = cand.value(img)
    if delta_prime > 0:
        dirs = _ball_directions(sys.n)
        for u in dirs:
            worst = np.maximum(worst, cand.value(img + delta_prime * u))
        gap = _chord_gap(sys.n, delta_prime)
        if gap > 0:
            lv = _local_slopes(cand.value(lat.centers), lat)
            worst = worst + np.median(lv) * gap
    return V0 - worst


def _cond2_margins(cand, sys, delta_prime, lat, alpha3, s, mask):
    dec = _decrease_centers(cand, sys, delta_prime, lat)
    phi = dec - alpha3(s)
    L = _local_slopes(phi, lat)
    return (phi - _LIP_SAFETY * L * lat.rad), dec


def _value_bounds(cand, lat, s):
    """Per-cell enclosure of the candidate value, shared by fit and verify."""
    if isinstance(cand, _SmoothedCandidate):
        d_lo = np.clip(s - lat.rad, 0.0, None)
        d_hi = s + lat.rad
        return cand.value_of_d(d_lo), cand.value_of_d(d_hi)
    if lat.count <= 20000:
        v_lo = np.empty(lat.count)
        v_hi = np.empty(lat.count)
        for ci in range(lat.count):
            iv = cand.value_interval(lat.cell_box(ci))
            v_lo[ci], v_hi[ci] = iv.lo, iv.hi
        return v_lo, v_hi
    V = cand.value(lat.centers)
    LV = _local_slopes(V, lat)
    return V - _LIP_SAFETY * LV * lat.rad, V + _LIP_SAFETY * LV * lat.rad


def _cond1_margins(cand, lat, s, alpha1, alpha2):
    """Sandwich margins with the one-cell distance slack."""
    v_lo, v_hi = _value_bounds(cand, lat, s)
    low = v_lo - alpha1(np.clip(s - lat.diag, 0.0, None))
    up = alpha2(s + lat.diag) - v_hi
    return low, up


def verify_V(cert: LyapunovCertificate, sys: SystemSpec,
             delta_prime: Optional[float] = None,
             resolution: Optional[float] = None) -> VerifyResult:
    """Re-check all certificate conditions on a fresh lattice over D."""
    dp = cert.delta_prime if delta_prime is None else float(delta_prime)
    res = cert.resolution if resolution is None else float(resolution)
    cand = cert.candidate
    lat = _lattice_over(cert.D, res)
    s = cand.dist(lat.centers) if hasattr(cand, "dist") \
        else DistanceField(cert.A).distance(lat.centers)
    band = _inner_band(cert.A, cert.D, lat)
    notes = [f"inner band {band:.6g}; condition-2 cells have distance > band",
             "margins subtract lattice-estimated Lipschitz slack"]

    low, up = _cond1_margins(cand, lat, s, cert.alpha1, cert.alpha2)
    margins = {"condition1_lower": float(np.min(low)),
               "condition1_upper": float(np.min(up))}

    outer = s > band
    if not np.any(outer):
        return VerifyResult(False, margins, "condition2", None, None,
                            lat.count, ("no cells outside the inner band",))
    m2, _ = _cond2_margins(cand, sys, dp, lat, cert.alpha3, s, outer)
    margins["condition2"] = float(np.min(m2[outer]))

    for name, vals, mask in (("condition1_lower", low, None),
                             ("condition1_upper", up, None),
                             ("condition2", m2, outer)):
        v = vals if mask is None else np.where(mask, vals, np.inf)
        worst = int(np.argmin(v))
        bad = v[worst] < (-1e-12 if name != "condition2" else _MARGIN_FLOOR)
        if bad:
            return VerifyResult(False, margins, name, lat.cell_index(worst),
                                tuple(lat.centers[worst]), lat.count, tuple(notes))
    return VerifyResult(True, margins, None, None, None, lat.count, tuple(notes))


# ---------------------------------------------------------------------------
# synthesis


def _check_preconditions(sys: SystemSpec, omega: GridSet, D: IntervalBox,
                         delta_prime: float):
    if omega.is_empty():
        raise ValueError("target cell set is empty")
    if omega.n != D.n or sys.n != omega.n:
        raise ValueError("dimension mismatch between system, cell set and box")
    if _gap_to_boundary(omega, D) <= 0:
        raise ValueError("cell set must lie strictly inside the box D")
    # delta == 0 means the set was not built from a perturbed reach run
    if omega.delta > 0 and delta_prime >= omega.delta - 1e-15:
        raise ValueError(
            f"delta_prime = {delta_prime} must be smaller than the "
            f"perturbation bound delta = {omega.delta} the set was built with")
    if delta_prime < 0:
        raise ValueError("delta_prime must be nonnegative")


def _fit_alpha12_smoothed(cand: _SmoothedCandidate, diam: float):
    d = np.linspace(1e-9, diam, 4096)
    ratio = cand.g_of_d(d) / d
    a1 = 0.999 * float(np.min(ratio)) ** 2
    a2 = 1.0  # g(d) < d for every d > 0
    return (ClassKFn(a1, 2.0, diam), ClassKFn(a2, 2.0, diam))


def _fit_alpha12_lattice(cand, lat: _Lattice, s: np.ndarray, diam: float):
    # fit against the same enclosures verify_V checks so the sandwich
    # cannot fail by construction (unless v_lo dips negative near the set)
    v_lo, v_hi = _value_bounds(cand, lat, s)
    s_hi = s + lat.diag
    a2 = 1.02 * float(np.max(v_hi / np.clip(s_hi, 1e-12, None) ** 2))
    s_lo = s - lat.diag
    usable = s_lo > 1e-12
    if np.any(usable) and np.min(v_lo[usable]) > 0:
        a1 = 0.98 * float(np.min(v_lo[usable] / s_lo[usable] ** 2))
    else:
        a1 = 1e-6
    a1 = min(max(a1, 1e-9), a2)
    return (ClassKFn(a1, 2.0, diam), ClassKFn(a2, 2.0, diam))


def _fit_alpha3(dec: np.ndarray, s: np.ndarray, outer: np.ndarray,
                diam: float) -> ClassKFn:
    if not np.any(outer) or np.min(dec[outer]) <= 0:
        raise SynthesisError(
            "no strict decrease outside the inner band",
            {"condition2": float(np.min(dec[outer])) if np.any(outer) else math.nan})
    best = None
    for p in (1.0, 2.0):
        a = _ALPHA3_SAFETY * float(np.min(dec[outer] / s[outer] ** p))
        if a <= 0:
            continue
        margin = float(np.min(dec[outer] - a * s[outer] ** p))
        if best is None or margin > best[0]:
            best = (margin, ClassKFn(a, p, diam))
    if best is None:
        raise SynthesisError("could not fit a decrease rate", {})
    return best[1]


def _certificate_from_candidate(cand, sys, omega, D, delta_prime, basis,
                                resolution, kappa=None, extra_notes=()):
    lat = _lattice_over(D, resolution)
    s = cand.dist(lat.centers)
    band = _inner_band(omega, D, lat)
    outer = s > band
    dec = _decrease_centers(cand, sys, delta_prime, lat)
    diam = float(np.linalg.norm(D.hi - D.lo))
    alpha3 = _fit_alpha3(dec, s, outer, diam)
    if isinstance(cand, _SmoothedCandidate):
        alpha1, alpha2 = _fit_alpha12_smoothed(cand, diam)
    else:
        alpha1, alpha2 = _fit_alpha12_lattice(cand, lat, s, diam)
    cert = LyapunovCertificate(
        V=cand.expr(), A=omega, D=D, delta_prime=delta_prime,
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, margins={},
        basis=basis, time_domain=sys.time_domain, resolution=resolution,
        band=band, kappa=kappa, notes=tuple(extra_notes), candidate=cand)
    result = verify_V(cert, sys)
    if not result.ok:
        raise SynthesisError(
            f"candidate failed {result.failed_condition} at cell "
            f"{result.failed_cell} (point {result.failed_point})",
            result.margins)
    cert.margins = dict(result.margins)
    return cert


def synthesize_V(sys: SystemSpec, omega: GridSet, D: IntervalBox,
                 delta_prime: float, basis: str = "smoothed_distance",
                 kappa: float = 200.0, degree: int = 4,
                 resolution: Optional[float] = None) -> LyapunovCertificate:
    """Build and verify a decrease certificate for the cell set omega.

    basis "smoothed_distance" squares a softplus of the grid distance;
    basis "polynomial" fits monomial coefficients by linear programming,
    maximizing the worst decrease slack over lattice samples subject to
    sandwich constraints.  Raises SynthesisError when verification fails.
    """
    _check_preconditions(sys, omega, D, delta_prime)
    if resolution is None:
        resolution = float(max(omega.widths))
    if basis == "smoothed_distance":
        cand = _SmoothedCandidate(omega, kappa)
        return _certificate_from_candidate(
            cand, sys, omega, D, delta_prime, basis, resolution, kappa=kappa)
    if basis == "polynomial":
        return _synthesize_polynomial(sys, omega, D, delta_prime, degree,
                                      resolution)
    raise ValueError(f"unknown basis {basis!r}")


def _monomial_powers(n: int, degree: int) -> list:
    out = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            powers = [0] * n
            for i in combo:
                powers[i] += 1
            out.append(tuple(powers))
    return sorted(set(out))


def _poly_expr(powers: Sequence[tuple], theta: np.ndarray) -> Expr:
    terms = []
    for pw, c in zip(powers, theta):
        if abs(c) < 1e-12:
            continue
        mono = "*".join(f"x{i + 1}^{e}" if e > 1 else f"x{i + 1}"
                        for i, e in enumerate(pw) if e > 0)
        terms.append(f"{float(c)!r}*{mono}")
    src = " + ".join(terms) if terms else "0.0"
    return parse(src)


def _poly_design(powers, X):
    C, n = X.shape
    m = len(powers)
    phi = np.ones((C, m))
    dphi = np.zeros((C, n, m))
    for k, pw in enumerate(powers):
        col = np.ones(C)
        for i, e in enumerate(pw):
            if e:
                col = col * X[:, i] ** e
        phi[:, k] = col
        for i, e in enumerate(pw):
            if not e:
                continue
            dcol = e * np.ones(C)
            for j, ej in enumerate(pw):
                ee = ej - 1 if j == i else ej
                if ee:
                    dcol = dcol * X[:, j] ** ee
            dphi[:, i, k] = dcol
    return phi, dphi


def _synthesize_polynomial(sys, omega, D, delta_prime, degree, resolution):
    if sys.time_domain != "continuous":
        raise ValueError("the polynomial basis supports continuous time only")
    lat = _lattice_over(D, resolution)
    dfield = DistanceField(omega)
    s = dfield.distance(lat.centers)
    band = _inner_band(omega, D, lat)
    diam = float(np.linalg.norm(D.hi - D.lo))

    # subsample the lattice for the LP; verification still runs on all cells
    keep = np.arange(lat.count)
    if lat.count > 400:
        keep = keep[:: max(1, lat.count // 400)]
    X = lat.centers[keep]
    sk = s[keep]
    outer = sk > band
    powers = _monomial_powers(sys.n, degree)
    phi, dphi = _poly_design(powers, X)
    F = sys.f_vec(X)
    drive = np.einsum("cif,ci->cf", dphi, F)  # (C, m)

    m = len(powers)
    C = X.shape[0]
    n = sys.n
    use_z = delta_prime > 0
    nz = C * n if use_z else 0

    best_margins: dict = {}
    for p3 in (1.0, 2.0):
        for a3 in (64, 32, 16, 8, 4, 2, 1, 0.5, 0.25, 0.1, 0.05, 0.02,
                   0.01, 0.005, 0.002, 0.001):
            rows, rhs = [], []

            def add(row_theta, row_z, row_t, b):
                row = np.zeros(m + nz + 1)
                row[:m] = row_theta
                if row_z is not None:
                    row[m:m + nz] = row_z
                row[-1] = row_t
                rows.append(row)
                rhs.append(b)

            for ci in np.flatnonzero(outer):
                rz = None
                if use_z:
                    rz = np.zeros(nz)
                    rz[ci * n:(ci + 1) * n] = delta_prime
                add(drive[ci], rz, 1.0, -a3 * sk[ci] ** p3)
            if use_z:
                for ci in range(C):
                    for i in range(n):
                        for sign in (1.0, -1.0):
                            rz = np.zeros(nz)
                            rz[ci * n + i] = -1.0
                            add(sign * dphi[ci, i], rz, 0.0, 0.0)
            s_lo = np.clip(sk - lat.diag, 0.0, None)
            s_hi = sk + lat.diag
            for ci in range(C):
                add(-phi[ci], None, 0.0, -0.01 * s_lo[ci] ** 2)
                add(phi[ci], None, 0.0, 8.0 * s_hi[ci] ** 2)

            bounds = [(-16, 16)] * m + [(0, None)] * nz + [(None, None)]
            obj = np.zeros(m + nz + 1)
            obj[-1] = -1.0
            sol = linprog(obj, A_ub=np.array(rows), b_ub=np.array(rhs),
                          bounds=bounds, method="highs")
            if not sol.success or sol.x[-1] < 1e-7:
                continue
            theta = sol.x[:m]
            cand = _ExprCandidate(_poly_expr(powers, theta), omega)
            try:
                return _certificate_from_candidate(
                    cand, sys, omega, D, delta_prime, "polynomial", resolution,
                    extra_notes=(f"degree {degree}, LP slack {sol.x[-1]:.3g}",))
            except SynthesisError as err:
                if not best_margins or err.margins.get("condition2", -np.inf) \
                        > best_margins.get("condition2", -np.inf):
                    best_margins = err.margins
                continue
    raise SynthesisError("no polynomial candidate achieved positive margins",
                         best_margins)


# ---------------------------------------------------------------------------
# empirical robust set stability


@dataclass(frozen=True)
class RuasReport:
    """Trial-backed stability and attraction estimates for a cell set."""

    delta_prime: float
    rho: float
    trials: int
    horizon: float
    stability_table: tuple   # rows (eps, delta_eps, worst_excursion)
    attraction_table: tuple  # rows (eps, T)
    counterexample: Optional[Trajectory]
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return self.counterexample is None

    def delta_for(self, eps: float) -> Optional[float]:
        for row in self.stability_table:
            if abs(row[0] - eps) < 1e-12:
                return row[1]
        return None

    def to_json(self) -> str:
        doc = {
            "schema": 1,
            "kind": "ruas_report",
            "delta_prime": self.delta_prime,
            "rho": self.rho,
            "trials": self.trials,
            "horizon": self.horizon,
            "stability": [{"eps": e, "delta_eps": d, "worst_excursion": w}
                          for (e, d, w) in self.stability_table],
            "attraction": [{"eps": e, "T": t} for (e, t) in self.attraction_table],
            "counterexample": None if self.counterexample is None
            else json.loads(self.counterexample.to_json()),
            "notes": list(self.notes),
        }
        return json.dumps(doc, sort_keys=True, indent=2)


class _ExcursionTracker:
    def __init__(self, field: DistanceField, B: int, eps: float):
        self.field = field
        self.eps = eps
        self.max_dist = np.zeros(B)
        self.last_exceed = np.full(B, -1.0)

    def __call__(self, t, states, alive):
        d = self.field.distance(states)
        live = np.where(alive, d, -np.inf)
        np.maximum(self.max_dist, live, out=self.max_dist)
        hot = live >= self.eps
        self.last_exceed[hot] = t


def _sample_at_distance(field: DistanceField, omega: GridSet, cap: float,
                        count: int, rng: np.random.Generator) -> np.ndarray:
    bb = omega.member_bounding_box()
    pad = cap + 2.0 * omega.half_diag
    lo = np.maximum(bb.lo - pad, omega.domain.lo)
    hi = np.minimum(bb.hi + pad, omega.domain.hi)
    out = []
    have = 0
    for _ in range(200):
        pts = rng.uniform(lo, hi, size=(max(4 * count, 1024), omega.n))
        d = field.distance(pts)
        good = (d > 0) & (d < cap)
        if np.any(good):
            out.append(pts[good])
            have += int(np.count_nonzero(good))
        if have >= count:
            break
    if have < count:
        raise ValueError(f"could not sample {count} states at distance < {cap}")
    return np.vstack(out)[:count]


def _policies_for(omega: GridSet, field: DistanceField, delta_prime: float,
                  seed: int):
    pols = [DisturbancePolicy.random(delta_prime, seed=seed)]
    if delta_prime > 0:
        pols.append(DisturbancePolicy.extremal(
            delta_prime, direction_fn=field.outward_direction))
    return pols


def _probe(sys, omega, field, delta_cand, eps, trials, horizon, step, dwell,
           delta_prime, seed):
    """Run all policies from states at distance < delta_cand.

    Returns (passed, worst_excursion, witness) where the witness is a
    (x0, policy) pair for a failing or blown-up row.
    """
    rng = np.random.default_rng(seed)
    pols = _policies_for(omega, field, delta_prime, seed)
    per = max(1, trials // len(pols))
    worst = 0.0
    witness = None
    passed = True
    for pol in pols:
        x0s = _sample_at_distance(field, omega, delta_cand, per, rng)
        tracker = _ExcursionTracker(field, per, eps)
        roll = rollout_batch(sys, x0s, pol, horizon, step=step, dwell=dwell,
                             rng=np.random.default_rng(seed + 1), observer=tracker)
        worst = max(worst, float(np.max(tracker.max_dist)))
        bad = roll.blown | (tracker.max_dist >= eps)
        if np.any(bad):
            passed = False
            i = int(np.argmax(np.where(roll.blown, np.inf, tracker.max_dist)))
            if witness is None or roll.blown[i]:
                witness = (x0s[i], pol, bool(roll.blown[i]))
            if np.any(roll.blown):
                break
    return passed, worst, witness


def _witness_trajectory(sys, witness, horizon, step, dwell, eps, field):
    """Re-run a failing start singly until the failure reproduces."""
    x0, pol, blown = witness
    for attempt in range(8):
        p = pol if pol.kind == "extremal" else \
            DisturbancePolicy.random(pol.delta, seed=pol.seed + attempt)
        traj = simulate(sys, x0, p, 2.0 * horizon, step=step, dwell=dwell)
        if traj.blown_up:
            return traj
        if np.max(field.distance(traj.states)) >= eps:
            return traj
        if pol.kind == "extremal":
            break
    return None


def check_ruas_empirical(sys: SystemSpec, omega: GridSet, delta_prime: float,
                         eps_list: Sequence[float], trials: int = 1000,
                         horizon: Optional[float] = None, step: float = 0.01,
                         dwell: Optional[float] = None,
                         seed: int = 0) -> RuasReport:
    """Bisection-search stability margins delta_eps for each eps.

    For each eps the search finds the largest tested delta_eps such that all
    sampled runs (random and outward-extremal policies) starting at grid
    distance below delta_eps keep their distance below eps.  Attraction
    times are estimated from starts at distance below rho, half the gap
    between the set and the domain boundary.  A diverging or escaping run
    is returned as a counterexample trajectory.
    """
    if omega.is_empty():
        raise ValueError("cell set is empty")
    if omega.delta > 0 and delta_prime > omega.delta + 1e-12:
        raise ValueError(
            f"delta_prime = {delta_prime} exceeds the perturbation bound "
            f"delta = {omega.delta} the set was built with")
    if horizon is None:
        horizon = 60.0 if sys.time_domain == "continuous" else 400
    field = DistanceField(omega)
    rho = 0.5 * _gap_to_boundary(omega, omega.domain)
    notes = []
    stability = []
    counterexample = None

    for k, eps in enumerate(sorted(eps_list)):
        hi = min(eps, rho)
        floor = hi / 1024.0
        ok_hi, worst_hi, witness = _probe(
            sys, omega, field, hi, eps, trials, horizon, step, dwell,
            delta_prime, seed + 1000 * k)
        if ok_hi:
            stability.append((float(eps), float(hi), worst_hi))
            continue
        if witness is not None and witness[2]:
            counterexample = _witness_trajectory(
                sys, witness, horizon, step, dwell, eps, field)
            notes.append(f"divergence from x0 = {np.asarray(witness[0]).tolist()} "
                         f"under the {witness[1].kind} policy")
            break
        lo_ok, hi_bad = 0.0, hi
        worst_at_lo = worst_hi
        for it in range(10):
            mid = 0.5 * (lo_ok + hi_bad)
            if mid < floor:
                break
            ok, worst, witness = _probe(
                sys, omega, field, mid, eps, trials, horizon, step, dwell,
                delta_prime, seed + 1000 * k + 7 * (it + 1))
            if ok:
                lo_ok, worst_at_lo = mid, worst
            else:
                hi_bad = mid
                if witness is not None and witness[2]:
                    break
        if witness is not None and witness[2]:
            counterexample = _witness_trajectory(
                sys, witness, horizon, step, dwell, eps, field)
            notes.append("divergence found during bisection")
            break
        if lo_ok <= floor:
            counterexample = _witness_trajectory(
                sys, witness, horizon, step, dwell, eps, field) if witness else None
            notes.append(f"stability margin collapsed below {floor:.3g} "
                         f"at eps = {eps}")
            break
        stability.append((float(eps), float(lo_ok), float(worst_at_lo)))

    attraction = []
    if counterexample is None and rho > 0:
        rng = np.random.default_rng(seed + 999)
        pols = _policies_for(omega, field, delta_prime, seed + 999)
        per = max(1, trials // len(pols))
        for eps in sorted(eps_list):
            t_eps = 0.0
            converged = True
            for pol in pols:
                x0s = _sample_at_distance(field, omega, rho, per, rng)
                tracker = _ExcursionTracker(field, per, eps)
                roll = rollout_batch(sys, x0s, pol, horizon, step=step,
                                     dwell=dwell,
                                     rng=np.random.default_rng(seed + 998),
                                     observer=tracker)
                final_d = field.distance(roll.final_states)
                if np.any(roll.blown) or np.any(final_d >= eps):
                    converged = False
                    break
                t_eps = max(t_eps, float(np.max(tracker.last_exceed)))
            if not converged:
                notes.append(f"no uniform attraction observed at eps = {eps}")
                continue
            attraction.append((float(eps), max(0.0, t_eps)))

    return RuasReport(
        delta_prime=float(delta_prime), rho=float(rho), trials=int(trials),
        horizon=float(horizon), stability_table=tuple(stability),
        attraction_table=tuple(attraction), counterexample=counterexample,
        notes=tuple(notes))
