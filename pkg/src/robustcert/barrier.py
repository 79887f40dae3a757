"""Barrier certificates over grid-verified safe sets.

A decrease certificate (V, alpha1..alpha3 on a cell set) yields barrier
functions three ways: plain negation B = -V, which is zero exactly on the
set and negative outside it; a level shift B_c = c - V whose zero level
encloses the set with clearance c; and a reciprocal 1/(c - V) defined on
the open sublevel region.  certify() checks any candidate barrier against
named condition variants on a uniform lattice:

    DEF4             B >= 0 on W, B < 0 on U, and worst-case flow push
                     grad B . f - delta' ||grad B|| >= 0 on the zero band
    RATSCHAN_STRICT  same with a strictly positive push on the band
    B0               push >= -alpha(B) everywhere, alpha fitted or given
    B1               push >= 0 everywhere
    B2               push >= -alpha0(B) everywhere, alpha0 from construction
    BC1              push >= alpha3(alpha2^-1(c - B)) everywhere
    PB               push on the zero band >= alpha3(alpha2^-1(c - eta))
    RB               1/h bounds hold identically and grad B . f plus the
                     disturbance term is below a fitted alpha3(h) on the
                     interior cells
    DEF10            B >= 0 on W, B < 0 on U, and B(f(x)+d) >= 0 from every
                     cell where B can be nonnegative
    DTB0/DTB1/DTB2   one-step drop bounded by a fitted (or construction)
                     comparison function, without disturbance
    BARRIERDT        one-step drop with disturbance bounded by a fitted
                     comparison function on nonpositive arguments
    DTRB             reciprocal one-step growth below a fitted alpha3(h)

Value conditions use per-cell interval enclosures, so they are sound at the
grid resolution.  Gradient conditions sample each cell at its center and
corners; curvature between samples is not bounded, which keeps margins
exactly zero on plateau and touching cells instead of manufacturing
spurious failures.  The zero band is the set of cells whose enclosure,
widened by its own width, contains zero; an empty band makes the flow
condition vacuous and is reported as a warning note.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .exprlang import (Expr, Num, Neg, Bin, parse, to_string, eval_expr,
                       grad, eval_interval, is_differentiable)
from .intervals import Interval, IntervalBox, IntervalDomainError
from .regions import RegionSpec
from .grids import GridSet
from .dynamics import SystemSpec, DisturbancePolicy, rollout_batch
from .lyapunov import (ClassKFn, LyapunovCertificate, _lattice_over,
                       _SmoothedCandidate)

__all__ = [
    "ExtendedClassKFn", "BarrierCertificate", "LevelChoice", "ReplayReport",
    "CertificationError", "CONTINUOUS_CONDITIONS", "DISCRETE_CONDITIONS",
    "construct_negV", "choose_level_c", "construct_levelled",
    "construct_reciprocal", "certify", "replay_invariance",
]

CONTINUOUS_CONDITIONS = ("DEF4", "RATSCHAN_STRICT", "B0", "B1", "B2",
                         "BC1", "PB", "RB")
DISCRETE_CONDITIONS = ("DEF10", "DTB0", "DTB1", "DTB2", "BARRIERDT", "DTRB")

_PASS_TOL = 1e-12     # non-strict conditions tolerate exact-zero margins
_STRICT_FLOOR = 1e-9  # strict variants need this much clearance


class CertificationError(RuntimeError):
    """A requested condition failed; carries the certificate with witnesses."""

    def __init__(self, message: str, certificate: "BarrierCertificate" = None):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class ExtendedClassKFn:
    """Strictly increasing comparison function on a literal interval (lo, hi].

    Unlike ClassKFn the domain may extend below zero; evaluating outside
    (lo, hi] raises ValueError.  Forms:

        neg_compose     alpha0(s) = -alpha3(alpha2^-1(-s))
        level_compose   alpha0(s) = -alpha3(alpha2^-1(level - s))
        power           alpha(s)  = a * sign(s) * |s|**p
    """

    form: str
    lo: float
    hi: float
    a: float = 1.0
    p: float = 1.0
    level: float = 0.0
    alpha2: Optional[ClassKFn] = None
    alpha3: Optional[ClassKFn] = None

    def __post_init__(self):
        if self.form not in ("neg_compose", "level_compose", "power"):
            raise ValueError(f"unknown extended class-K form {self.form!r}")
        if self.form != "power" and (self.alpha2 is None or self.alpha3 is None):
            raise ValueError(f"form {self.form!r} needs alpha2 and alpha3")
        if not (self.lo < self.hi):
            raise ValueError("domain must satisfy lo < hi")
        if self.form == "power" and not (self.a > 0 and self.p >= 1):
            raise ValueError("power form needs a > 0 and p >= 1")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s <= self.lo - 1e-12) or np.any(s > self.hi + 1e-12):
            raise ValueError(
                f"argument outside the domain ({self.lo:.6g}, {self.hi:.6g}]")
        if self.form == "power":
            out = self.a * np.sign(s) * np.abs(s) ** self.p
        else:
            arg = -s if self.form == "neg_compose" else self.level - s
            out = -self.alpha3(self.alpha2.inverse(np.clip(arg, 0.0, None)))
        out = np.asarray(out)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        d = {"form": self.form, "domain_lo": self.lo, "domain_hi": self.hi}
        if self.form == "power":
            d.update(a=self.a, p=self.p)
        else:
            d.update(alpha2=self.alpha2.to_dict(), alpha3=self.alpha3.to_dict())
            if self.form == "level_compose":
                d["level"] = self.level
        return d


# ---------------------------------------------------------------------------
# candidate evaluators


class _ExprBarrier:
    """Closed-form candidate; gradients via forward AD."""

    def __init__(self, expr):
        self.expr = parse(expr) if isinstance(expr, str) else expr

    def value(self, x):
        return eval_expr(self.expr, x)

    def gradient(self, x):
        return grad(self.expr, x)

    def value_interval(self, box: IntervalBox) -> Interval:
        return eval_interval(self.expr, box)


class _ShiftedNegV:
    """B = offset - V for a stored certificate candidate."""

    def __init__(self, base, offset: float):
        self.base = base
        self.offset = float(offset)
        ve = base.expr()
        self.expr = Bin("-", Num(self.offset), ve) if self.offset else Neg(ve)

    def value(self, x):
        return self.offset - self.base.value(x)

    def gradient(self, x):
        return -self.base.gradient(x)

    def value_interval(self, box: IntervalBox) -> Interval:
        iv = self.base.value_interval(box)
        return Interval(self.offset - iv.hi, self.offset - iv.lo)


class _ReciprocalOfV:
    """B = 1 / (level - V), defined where the denominator is positive."""

    def __init__(self, base, level: float):
        self.base = base
        self.level = float(level)
        self.expr = Bin("/", Num(1.0), Bin("-", Num(self.level), base.expr()))

    def h_value(self, x):
        return self.level - self.base.value(x)

    def h_interval(self, box: IntervalBox) -> Interval:
        iv = self.base.value_interval(box)
        return Interval(self.level - iv.hi, self.level - iv.lo)

    def value(self, x):
        return 1.0 / self.h_value(x)

    def gradient(self, x):
        h = self.h_value(x)
        return self.base.gradient(x) / (h * h)[..., None]

    def value_interval(self, box: IntervalBox) -> Interval:
        h = self.h_interval(box)
        if h.lo <= 0:
            raise IntervalDomainError("denominator not positive over the box")
        return Interval(1.0 / h.hi, 1.0 / h.lo)


# ---------------------------------------------------------------------------
# certificate record


def _jnum(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class BarrierCertificate:
    """Barrier candidate with its per-condition verification ledger."""

    B: Expr
    kind: str                      # negV | levelled | reciprocal | custom
    delta_prime: float
    W: RegionSpec
    U: RegionSpec
    verified_conditions: tuple = ()
    margins: dict = dc_field(default_factory=dict)
    alpha0: object = None
    domain: Optional[IntervalBox] = None
    resolution: Optional[float] = None
    time_domain: str = "continuous"
    level_c: Optional[float] = None
    alpha2: Optional[ClassKFn] = None
    alpha3: Optional[ClassKFn] = None
    failures: dict = dc_field(default_factory=dict)
    notes: tuple = ()
    meta: dict = dc_field(default_factory=dict)
    candidate: object = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.B, str):
            self.B = parse(self.B)
        if self.kind not in ("negV", "levelled", "reciprocal", "custom"):
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if self.candidate is None:
            self.candidate = _ExprBarrier(self.B)

    @property
    def ok(self) -> bool:
        """Every requested condition passed."""
        return not self.failures

    @property
    def valid(self) -> bool:
        """ok and one of the full barrier definitions is among the verified."""
        return self.ok and bool({"DEF4", "DEF10"} & set(self.verified_conditions))

    def value(self, x):
        return self.candidate.value(x)

    def to_json(self) -> str:
        ledger = {}
        for name in sorted(set(self.verified_conditions) | set(self.margins)
                           | set(self.failures)):
            ledger[name] = {
                "verified": name in self.verified_conditions,
                "margin": _jnum(self.margins[name]) if name in self.margins else None,
                "witness": self.failures.get(name),
            }
        payload = {
            "schema": 1,
            "expression": to_string(self.B),
            "kind": self.kind,
            "time_domain": self.time_domain,
            "delta_prime": self.delta_prime,
            "level_c": self.level_c,
            "W": self.W.to_dict() if self.W is not None else None,
            "U": self.U.to_dict() if self.U is not None else None,
            "conditions": ledger,
            "alpha0": self.alpha0.to_dict()
                      if hasattr(self.alpha0, "to_dict") else None,
            "domain": {"lo": self.domain.lo.tolist(),
                       "hi": self.domain.hi.tolist()}
                      if self.domain is not None else None,
            "resolution": self.resolution,
            "valid": self.valid,
            "notes": list(self.notes),
            "meta": self.meta,
        }
        return json.dumps(payload, sort_keys=True)


# ---------------------------------------------------------------------------
# lattice-level primitives


def _cell_bounds(cand, lat, idxs) -> tuple:
    """Value enclosures on the given cells; infinite when undefined there."""
    idxs = np.asarray(idxs, dtype=int)
    lo = np.empty(idxs.size)
    hi = np.empty(idxs.size)
    for k, ci in enumerate(idxs):
        try:
            iv = cand.value_interval(lat.cell_box(int(ci)))
            lo[k], hi[k] = iv.lo, iv.hi
        except (IntervalDomainError, ValueError, ZeroDivisionError,
                OverflowError):
            lo[k], hi[k] = -math.inf, math.inf
    return lo, hi


def _region_cells(region: Optional[RegionSpec], lat, shrink: float = 0.0
                  ) -> np.ndarray:
    """Mask of cells that may intersect the region (closed semantics)."""
    mask = np.zeros(lat.count, dtype=bool)
    if region is None or region.is_syntactically_empty:
        return mask
    eps = shrink * float(np.min(lat.widths))
    for ci in range(lat.count):
        box = lat.cell_box(ci)
        if eps:
            box = IntervalBox(box.lo + eps, box.hi - eps)
        if region.classify_cell(box) != "outside":
            mask[ci] = True
    return mask


def _region_cells_inside(region: Optional[RegionSpec], lat) -> np.ndarray:
    mask = np.zeros(lat.count, dtype=bool)
    if region is None or region.is_syntactically_empty:
        return mask
    for ci in range(lat.count):
        if region.classify_cell(lat.cell_box(ci)) == "inside":
            mask[ci] = True
    return mask


def _lattice_origin(lat) -> np.ndarray:
    return lat.centers[0] - lat.widths / 2


def _lattice_nodes(lat) -> np.ndarray:
    lo = _lattice_origin(lat)
    axes = [lo[i] + np.arange(m + 1) * lat.widths[i]
            for i, m in enumerate(lat.shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _corner_min(node_vals: np.ndarray, shape) -> np.ndarray:
    """Per-cell minimum over the 2^n corner nodes."""
    node_vals = node_vals.reshape(tuple(m + 1 for m in shape))
    out = None
    n = len(shape)
    for mask in range(2 ** n):
        sl = tuple(slice(1, None) if (mask >> i) & 1 else slice(0, -1)
                   for i in range(n))
        piece = node_vals[sl]
        out = piece.copy() if out is None else np.minimum(out, piece)
    return out.ravel()


def _q_values(cand, sys: SystemSpec, delta_prime: float, pts: np.ndarray,
              sign: float = -1.0) -> np.ndarray:
    """grad B . f + sign * delta' * ||grad B|| at the given points."""
    G = cand.gradient(pts)
    F = sys.f_vec(pts)
    drive = np.einsum("ij,ij->i", G, F)
    return drive + sign * delta_prime * np.linalg.norm(G, axis=-1)


def _push_low(cand, sys: SystemSpec, delta_prime: float, lat) -> np.ndarray:
    """Per-cell lower estimate of the worst-case flow push.

    min over center and corners of grad B . f - delta' ||grad B||.  Cells
    touching the zero plateau of a smoothed-distance base get an exact
    product bound (gradient magnitude times outward advection), which is
    identically zero on the plateau.
    """
    with np.errstate(all="ignore"):
        qc = _q_values(cand, sys, delta_prime, lat.centers)
        qn = _q_values(cand, sys, delta_prime, _lattice_nodes(lat))
    out = np.minimum(qc, _corner_min(qn, lat.shape))

    base = getattr(cand, "base", None)
    if isinstance(base, _SmoothedCandidate):
        s = base.dist(lat.centers)
        touch = (s - lat.rad) <= 1e-12
        for ci in np.flatnonzero(touch):
            out[ci] = _plateau_push_low(base, sys, delta_prime, lat, int(ci))
    return out


def _plateau_push_low(base, sys, delta_prime, lat, ci) -> float:
    """Product bound near the plateau: the gradient magnitude range times
    the outward advection range, so fully plateau cells bound at zero."""
    box = lat.cell_box(ci)
    pts = np.vstack([box.center[None, :], box.corners()])
    d = base.dist(pts)
    off = d > 1e-12
    if not np.any(off):
        return 0.0
    u = base.field.outward_direction(pts[off])
    f = sys.f_vec(pts[off])
    q = -np.einsum("ij,ij->i", u, f) - delta_prime
    q_lo, q_hi = float(np.min(q)), float(np.max(q))
    s = float(base.dist(box.center[None, :])[0])
    gm_lo = float(base.gmag_of_d(max(0.0, s - lat.rad)))
    gm_hi = float(base.gmag_of_d(s + lat.rad))
    return min(gm_lo * q_lo, gm_lo * q_hi, gm_hi * q_lo, gm_hi * q_hi)


def _push_high(cand, sys: SystemSpec, delta_prime: float, lat) -> np.ndarray:
    """Per-cell upper estimate of grad B . f + delta' ||grad B||."""
    with np.errstate(all="ignore"):
        qc = _q_values(cand, sys, delta_prime, lat.centers, sign=+1.0)
        qn = _q_values(cand, sys, delta_prime, _lattice_nodes(lat), sign=+1.0)
    return np.maximum(qc, -_corner_min(-qn, lat.shape))


def _f_image_box(sys: SystemSpec, box: IntervalBox) -> IntervalBox:
    ivs = [eval_interval(e, box) for e in sys.f]
    return IntervalBox([iv.lo for iv in ivs], [iv.hi for iv in ivs])


def _next_bounds(cand, sys: SystemSpec, lat, idxs, pad: float) -> tuple:
    """Enclosure of B(f(x)+d) per cell: the interval image of f, padded by
    the disturbance radius, run through the candidate's own enclosure."""
    idxs = np.asarray(idxs, dtype=int)
    lo = np.empty(idxs.size)
    hi = np.empty(idxs.size)
    for k, ci in enumerate(idxs):
        try:
            Y = _f_image_box(sys, lat.cell_box(int(ci)))
            if pad:
                Y = IntervalBox(Y.lo - pad, Y.hi + pad)
            iv = cand.value_interval(Y)
            lo[k], hi[k] = iv.lo, iv.hi
        except (IntervalDomainError, ValueError, ZeroDivisionError,
                OverflowError):
            lo[k], hi[k] = -math.inf, math.inf
    return lo, hi


# ---------------------------------------------------------------------------
# per-condition checks


class _Ctx:
    """Shared lattice data for one certify run, computed lazily."""

    def __init__(self, cand, sys, lat, delta_prime, W, U, level_c,
                 alpha0, alpha2, alpha3):
        self.cand = cand
        self.sys = sys
        self.lat = lat
        self.delta_prime = float(delta_prime)
        self.W = W
        self.U = U
        self.level_c = level_c
        self.alpha0 = alpha0
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.notes: list = []
        self.meta: dict = {}
        self._cache: dict = {}

    def bounds(self):
        if "bounds" not in self._cache:
            self._cache["bounds"] = _cell_bounds(
                self.cand, self.lat, np.arange(self.lat.count))
        return self._cache["bounds"]

    def centers_value(self):
        if "bc" not in self._cache:
            with np.errstate(all="ignore"):
                self._cache["bc"] = self.cand.value(self.lat.centers)
        return self._cache["bc"]

    def band(self):
        """Zero-band cells and the band tolerance eta."""
        if "band" not in self._cache:
            b_lo, b_hi = self.bounds()
            width = b_hi - b_lo
            mask = np.abs(self.centers_value()) <= width + 1e-15
            mask &= np.isfinite(width)
            eta = float(np.max(width[mask])) if np.any(mask) else 0.0
            self._cache["band"] = (mask, eta)
        return self._cache["band"]

    def push_low(self):
        if "push_low" not in self._cache:
            self._cache["push_low"] = _push_low(
                self.cand, self.sys, self.delta_prime, self.lat)
        return self._cache["push_low"]

    def push_high(self):
        if "push_high" not in self._cache:
            self._cache["push_high"] = _push_high(
                self.cand, self.sys, self.delta_prime, self.lat)
        return self._cache["push_high"]

    def W_cells(self):
        # shrink cells a hair so regions sharing only a face stay out
        if "W_cells" not in self._cache:
            self._cache["W_cells"] = _region_cells(self.W, self.lat,
                                                   shrink=1e-9)
        return self._cache["W_cells"]

    def U_cells(self):
        if "U_cells" not in self._cache:
            self._cache["U_cells"] = _region_cells(self.U, self.lat,
                                                   shrink=1e-9)
        return self._cache["U_cells"]

    def next_lo(self, pad: float):
        key = ("next", pad)
        if key not in self._cache:
            self._cache[key] = _next_bounds(
                self.cand, self.sys, self.lat, np.arange(self.lat.count), pad)
        return self._cache[key]

    def core_cells(self):
        """Interior of the positive-denominator region, eroded one layer."""
        if "core" not in self._cache:
            if not isinstance(self.cand, _ReciprocalOfV):
                raise ValueError("reciprocal conditions need a reciprocal "
                                 "construction certificate")
            h_lo = np.empty(self.lat.count)
            for ci in range(self.lat.count):
                h_lo[ci] = self.cand.h_interval(self.lat.cell_box(ci)).lo
            mask = (h_lo > 0).reshape(self.lat.shape)
            structure = np.ones((3,) * len(self.lat.shape), dtype=bool)
            core = ndimage.binary_erosion(mask, structure=structure,
                                          border_value=0)
            self._cache["core"] = (core.ravel(), h_lo)
        return self._cache["core"]

    def witness(self, ci: int, margin: float, part: str) -> dict:
        return {"cell": [int(v) for v in self.lat.cell_index(int(ci))],
                "point": [float(v) for v in self.lat.centers[int(ci)]],
                "margin": _jnum(margin),
                "part": part}


def _masked_min(vals, mask):
    if not np.any(mask):
        return math.inf, None
    v = np.where(mask, vals, np.inf)
    ci = int(np.argmin(v))
    return float(v[ci]), ci


def _cond_set_membership(ctx: _Ctx):
    """Parts (1) and (2): sign of B on W cells and on U cells."""
    b_lo, b_hi = ctx.bounds()
    m1, c1 = _masked_min(b_lo, ctx.W_cells())
    m2, c2 = _masked_min(-b_hi, ctx.U_cells())
    return (m1, c1), (m2, c2)


def _cond_def4(ctx: _Ctx, strict: bool):
    (m1, c1), (m2, c2) = _cond_set_membership(ctx)
    if m1 < -_PASS_TOL:
        return False, m1, ctx.witness(c1, m1, "B >= 0 on W")
    if m2 <= 0 and c2 is not None:
        return False, m2, ctx.witness(c2, m2, "B < 0 on U")
    band, eta = ctx.band()
    if not np.any(band):
        ctx.notes.append("zero-level band is empty: the flow condition "
                         "holds vacuously")
        return True, min(m1, m2), None
    m3, c3 = _masked_min(ctx.push_low(), band)
    name = "strict flow push on the zero band" if strict \
        else "flow push on the zero band"
    floor = _STRICT_FLOOR if strict else -_PASS_TOL
    if m3 < floor:
        return False, m3, ctx.witness(c3, m3, name)
    ctx.meta.setdefault("zero_band", {"cells": int(np.count_nonzero(band)),
                                      "eta": eta})
    return True, min(m1, m2, m3), None


def _cond_b1(ctx: _Ctx):
    vals = ctx.push_low()
    m, ci = _masked_min(vals, np.ones(ctx.lat.count, dtype=bool))
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m, "flow push everywhere")
    return True, m, None


def _alpha0_comp(ctx: _Ctx):
    """alpha0 evaluated on the slack side of each cell enclosure.

    Cells whose enclosure falls entirely outside the stored domain of
    alpha0 are outside the condition's quantifier and come back ineligible;
    straddling cells evaluate at the nearest in-domain argument.
    """
    b_lo, b_hi = ctx.bounds()
    lo = getattr(ctx.alpha0, "lo", -math.inf)
    hi = getattr(ctx.alpha0, "hi", math.inf)
    eligible = (b_hi > lo) & (b_lo <= hi) & np.isfinite(b_hi)
    arg = np.clip(b_hi, None, hi)
    comp = np.zeros(ctx.lat.count)
    comp[eligible] = np.asarray(ctx.alpha0(arg[eligible]), dtype=float)
    skipped = int(np.count_nonzero(~eligible))
    if skipped:
        ctx.notes.append(f"{skipped} cells fall outside the domain of "
                         "alpha0 and are not constrained by it")
    return comp, eligible


def _cond_b0(ctx: _Ctx):
    push = ctx.push_low()
    b_lo, b_hi = ctx.bounds()
    if ctx.alpha0 is not None:
        try:
            comp, eligible = _alpha0_comp(ctx)
        except ValueError as err:
            return False, -math.inf, {"part": f"alpha0 evaluation: {err}"}
        margins = push + comp
        m, ci = _masked_min(margins, eligible & np.isfinite(margins))
        if m < -_PASS_TOL:
            return False, m, ctx.witness(ci, m, "push >= -alpha0(B)")
        return True, m, None
    # fit a power comparison: positive arguments may relax the push,
    # negative arguments must be dominated by it
    best = None
    for p in (1.0, 2.0):
        for a in (0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
            comp = a * np.sign(b_hi) * np.abs(np.clip(b_hi, -1e9, 1e9)) ** p
            margins = push + comp
            m, ci = _masked_min(margins, np.isfinite(margins))
            if best is None or m > best[0]:
                best = (m, ci, a, p)
    m, ci, a, p = best
    ctx.meta["B0_alpha"] = {"form": "power", "a": a, "p": p}
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m, "push >= -alpha(B), fitted alpha")
    return True, m, None


def _cond_b2(ctx: _Ctx):
    push = ctx.push_low()
    try:
        comp, eligible = _alpha0_comp(ctx)
    except ValueError as err:
        return False, -math.inf, {"part": f"alpha0 evaluation: {err}"}
    margins = push + comp
    m, ci = _masked_min(margins, eligible & np.isfinite(margins))
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m, "push >= -alpha0(B)")
    return True, m, None


def _level_requirement(ctx: _Ctx, b_vals: np.ndarray) -> np.ndarray:
    arg = np.clip(ctx.level_c - b_vals, 0.0, None)
    cap = ctx.alpha2.a * ctx.alpha2.s_max ** ctx.alpha2.p \
        if math.isfinite(ctx.alpha2.s_max) else math.inf
    return ctx.alpha3(ctx.alpha2.inverse(np.minimum(arg, cap)))


def _cond_bc1(ctx: _Ctx):
    push = ctx.push_low()
    _, b_hi = ctx.bounds()
    req = _level_requirement(ctx, np.clip(b_hi, None, ctx.level_c))
    margins = push - req
    m, ci = _masked_min(margins, np.isfinite(margins))
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m,
                                     "push >= alpha3(alpha2^-1(c - B))")
    return True, m, None


def _cond_pb(ctx: _Ctx):
    band, eta = ctx.band()
    analytic = float(ctx.alpha3(ctx.alpha2.inverse(ctx.level_c)))
    target = float(ctx.alpha3(ctx.alpha2.inverse(
        max(ctx.level_c - eta, 0.0))))
    ctx.meta["PB"] = {"eta": eta, "zero_level_margin": target,
                      "analytic_margin": analytic}
    if not np.any(band):
        ctx.notes.append("zero-level band is empty: the strict level "
                         "condition holds vacuously")
        return True, target, None
    if target <= 0:
        m, ci = _masked_min(ctx.push_low(), band)
        return False, target, ctx.witness(
            ci, target, "certified zero-level margin not positive")
    deficit = ctx.push_low() - target
    m, ci = _masked_min(deficit, band)
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m,
                                     "push below the zero-level margin")
    return True, target, None


def _cond_rb(ctx: _Ctx):
    core, h_lo = ctx.core_cells()
    if not np.any(core):
        return False, -math.inf, {"part": "no interior cells with a "
                                          "positive denominator"}
    push = ctx.push_high()
    ratios = push[core] / h_lo[core]
    a = max(1e-6, 1.05 * float(np.max(ratios)))
    margins = a * h_lo - push
    m, ci = _masked_min(margins, core)
    ctx.meta["RB"] = {"alpha1": {"a": 1.0, "p": 1.0},
                      "alpha2": {"a": 1.0, "p": 1.0},
                      "alpha3": {"a": a, "p": 1.0},
                      "core_cells": int(np.count_nonzero(core))}
    ctx.notes.append("reciprocal bounds hold with identity comparison "
                     "functions and zero slack by construction")
    if m <= 0:
        return False, m, ctx.witness(ci, m, "flow growth above alpha3(h)")
    return True, m, None


def _cond_def10(ctx: _Ctx):
    (m1, c1), (m2, c2) = _cond_set_membership(ctx)
    if m1 < -_PASS_TOL:
        return False, m1, ctx.witness(c1, m1, "B >= 0 on W")
    if m2 <= 0 and c2 is not None:
        return False, m2, ctx.witness(c2, m2, "B < 0 on U")
    _, b_hi = ctx.bounds()
    start = b_hi >= -_PASS_TOL
    if not np.any(start):
        ctx.notes.append("no cells can reach B >= 0: the step condition "
                         "holds vacuously")
        return True, min(m1, m2), None
    next_lo, _ = ctx.next_lo(ctx.delta_prime)
    m3, c3 = _masked_min(next_lo, start)
    if m3 < -_PASS_TOL:
        return False, m3, ctx.witness(c3, m3,
                                      "B(f(x)+d) >= 0 from B(x) >= 0")
    return True, min(m1, m2, m3), None


def _cond_dtb1(ctx: _Ctx):
    _, b_hi = ctx.bounds()
    start = b_hi >= -_PASS_TOL
    if not np.any(start):
        return True, math.inf, None
    next_lo, _ = ctx.next_lo(0.0)
    margins = next_lo - b_hi
    m, ci = _masked_min(margins, start)
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m, "one-step drop on B >= 0 cells")
    return True, m, None


def _cond_dtb0(ctx: _Ctx):
    b_lo, b_hi = ctx.bounds()
    next_lo, _ = ctx.next_lo(0.0)
    gap = next_lo - b_hi
    finite = np.isfinite(gap) & np.isfinite(b_hi)
    best = None
    for a in (0.1, 0.25, 0.5, 0.75, 0.9):
        comp = a * b_hi  # alpha(r) = a r with a < 1, extended to negatives
        margins = gap + comp
        m, ci = _masked_min(margins, finite)
        if best is None or m > best[0]:
            best = (m, ci, a)
    m, ci, a = best
    ctx.meta["DTB0_alpha"] = {"form": "power", "a": a, "p": 1.0}
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m,
                                     "one-step drop >= -alpha(B), a < 1")
    return True, m, None


def _cond_dtb2(ctx: _Ctx):
    _, b_hi = ctx.bounds()
    next_lo, _ = ctx.next_lo(0.0)
    try:
        comp, eligible = _alpha0_comp(ctx)
    except ValueError as err:
        return False, -math.inf, {"part": f"alpha0 evaluation: {err}"}
    margins = next_lo - b_hi + comp
    m, ci = _masked_min(margins, eligible & np.isfinite(margins))
    if m < -_PASS_TOL:
        return False, m, ctx.witness(ci, m, "one-step drop >= -alpha0(B)")
    return True, m, None


def _cond_barrierdt(ctx: _Ctx):
    _, b_hi = ctx.bounds()
    next_lo, _ = ctx.next_lo(ctx.delta_prime)
    gap = next_lo - b_hi
    arg = np.clip(b_hi, None, 0.0)  # the comparison lives on (-a, 0]
    finite = np.isfinite(gap) & np.isfinite(arg)
    best = None
    for p in (1.0, 2.0):
        for a in (0.25, 0.5, 1.0, 2.0, 4.0):
            margins = gap - a * np.abs(arg) ** p
            m, ci = _masked_min(margins, finite)
            if best is None or m > best[0]:
                best = (m, ci, a, p)
    m, ci, a, p = best
    ctx.meta["BARRIERDT_alpha"] = {"form": "power", "a": a, "p": p}
    if m < -_PASS_TOL:
        return False, m, ctx.witness(
            ci, m, "disturbed one-step drop >= -alpha(B)")
    return True, m, None


def _cond_dtrb(ctx: _Ctx):
    core, h_lo = ctx.core_cells()
    if not np.any(core):
        return False, -math.inf, {"part": "no interior cells with a "
                                          "positive denominator"}
    b_lo, _ = ctx.bounds()
    _, next_hi = ctx.next_lo(ctx.delta_prime)
    growth = next_hi - b_lo
    finite = core & np.isfinite(growth)
    if not np.any(finite):
        m, ci = _masked_min(growth, core)
        return False, -math.inf, ctx.witness(
            ci, -math.inf, "image leaves the positive-denominator region")
    ratios = growth[finite] / h_lo[finite]
    a = max(1e-6, 1.05 * float(np.max(ratios)))
    margins = a * h_lo - growth
    m, ci = _masked_min(margins, core)
    ctx.meta["DTRB"] = {"alpha3": {"a": a, "p": 1.0},
                        "core_cells": int(np.count_nonzero(core))}
    if not np.isfinite(m) or m <= 0:
        return False, m, ctx.witness(ci, m,
                                     "one-step growth above alpha3(h)")
    return True, m, None


_CHECKS = {
    "DEF4": lambda ctx: _cond_def4(ctx, strict=False),
    "RATSCHAN_STRICT": lambda ctx: _cond_def4(ctx, strict=True),
    "B0": _cond_b0,
    "B1": _cond_b1,
    "B2": _cond_b2,
    "BC1": _cond_bc1,
    "PB": _cond_pb,
    "RB": _cond_rb,
    "DEF10": _cond_def10,
    "DTB0": _cond_dtb0,
    "DTB1": _cond_dtb1,
    "DTB2": _cond_dtb2,
    "BARRIERDT": _cond_barrierdt,
    "DTRB": _cond_dtrb,
}

_NEEDS_ALPHA0 = {"B2", "DTB2"}
_NEEDS_LEVEL = {"BC1", "PB"}
_NEEDS_RECIPROCAL = {"RB", "DTRB"}
_GRADIENT_CONDS = set(CONTINUOUS_CONDITIONS)


def certify(B, sys: SystemSpec, W: Optional[RegionSpec] = None,
            U: Optional[RegionSpec] = None,
            delta_prime: Optional[float] = None,
            domain: Optional[IntervalBox] = None,
            resolution: Optional[float] = None,
            conditions: Optional[Sequence[str]] = None, *,
            level_c: Optional[float] = None,
            alpha0=None, alpha2: Optional[ClassKFn] = None,
            alpha3: Optional[ClassKFn] = None,
            kind: Optional[str] = None,
            candidate=None) -> BarrierCertificate:
    """Check a candidate barrier against the requested condition variants.

    B may be an expression, its source text, or a previously constructed
    BarrierCertificate (whose context fields become the defaults).  Always
    returns a certificate; failed conditions carry a witness cell in
    `failures` and leave `ok` False.  Raises ValueError for configuration
    problems: unknown names, conditions from the wrong time domain, missing
    construction context, overlapping W and U, or a non-differentiable B
    with gradient conditions requested.
    """
    if isinstance(B, BarrierCertificate):
        prior = B
        expr = prior.B
        candidate = candidate if candidate is not None else prior.candidate
        W = W if W is not None else prior.W
        U = U if U is not None else prior.U
        delta_prime = prior.delta_prime if delta_prime is None else delta_prime
        domain = domain if domain is not None else prior.domain
        resolution = resolution if resolution is not None else prior.resolution
        level_c = level_c if level_c is not None else prior.level_c
        alpha0 = alpha0 if alpha0 is not None else prior.alpha0
        alpha2 = alpha2 if alpha2 is not None else prior.alpha2
        alpha3 = alpha3 if alpha3 is not None else prior.alpha3
        kind = kind or prior.kind
        base_notes = tuple(prior.notes)
        meta = dict(prior.meta)
    else:
        expr = parse(B) if isinstance(B, str) else B
        kind = kind or "custom"
        base_notes = ()
        meta = {}
    if domain is None or resolution is None:
        raise ValueError("certify needs a verification box and a resolution")
    delta_prime = float(delta_prime or 0.0)
    if delta_prime < 0:
        raise ValueError("delta_prime must be nonnegative")
    W = W if W is not None else RegionSpec.empty()
    U = U if U is not None else RegionSpec.empty()
    if conditions is None:
        conditions = ("DEF4",) if sys.time_domain == "continuous" \
            else ("DEF10",)
    conditions = tuple(dict.fromkeys(conditions))

    for name in conditions:
        if name not in _CHECKS:
            raise ValueError(f"unknown condition {name!r}")
        wants = "continuous" if name in CONTINUOUS_CONDITIONS else "discrete"
        if wants != sys.time_domain:
            raise ValueError(f"condition {name} applies to {wants}-time "
                             f"systems, got {sys.time_domain}")
    if any(n in _NEEDS_ALPHA0 for n in conditions) and alpha0 is None:
        raise ValueError("conditions B2/DTB2 need the construction's alpha0")
    if any(n in _NEEDS_LEVEL for n in conditions) and \
            (level_c is None or alpha2 is None or alpha3 is None):
        raise ValueError("conditions BC1/PB need level_c, alpha2 and alpha3")

    cand = candidate if candidate is not None else _ExprBarrier(expr)
    # construction candidates carry smooth gradients of their own; only a
    # raw expression needs to be differentiable for forward AD
    if any(n in _GRADIENT_CONDS for n in conditions) and \
            isinstance(cand, _ExprBarrier) and not is_differentiable(expr):
        raise ValueError("gradient conditions need a differentiable barrier")
    if any(n in _NEEDS_RECIPROCAL for n in conditions) and \
            not isinstance(cand, _ReciprocalOfV):
        raise ValueError("conditions RB/DTRB need a reciprocal "
                         "construction certificate")

    lat = _lattice_over(domain, float(resolution))
    ctx = _Ctx(cand, sys, lat, delta_prime, W, U, level_c,
               alpha0, alpha2, alpha3)

    overlap = ctx.W_cells() & ctx.U_cells()
    if np.any(overlap):
        inside_w = _region_cells_inside(W, lat)
        inside_u = _region_cells_inside(U, lat)
        if np.any(inside_w & inside_u):
            raise ValueError("W and U overlap on the verification grid")
        ctx.notes.append("W and U touch at the grid resolution; treating "
                         "the shared cells as both")

    margins: dict = {}
    failures: dict = {}
    verified: list = []
    for name in conditions:
        ok, margin, witness = _CHECKS[name](ctx)
        margins[name] = margin
        if ok:
            verified.append(name)
        else:
            failures[name] = witness
    meta.update(ctx.meta)
    meta["cells"] = lat.count
    return BarrierCertificate(
        B=expr, kind=kind, delta_prime=delta_prime, W=W, U=U,
        verified_conditions=tuple(verified), margins=margins, alpha0=alpha0,
        domain=domain, resolution=float(resolution),
        time_domain=sys.time_domain, level_c=level_c, alpha2=alpha2,
        alpha3=alpha3, failures=failures,
        notes=base_notes + tuple(ctx.notes), meta=meta, candidate=cand)


# ---------------------------------------------------------------------------
# constructions


def _member_region(A: GridSet) -> RegionSpec:
    """Member cells as a union of boxes, merging runs along the last axis."""
    idx = np.argwhere(A.member_mask)
    if idx.size == 0:
        return RegionSpec.empty()
    w = A.widths
    lo0 = A.domain.lo
    boxes = []
    run_start = prev = idx[0]
    for ix in idx[1:]:
        if np.array_equal(ix[:-1], prev[:-1]) and ix[-1] == prev[-1] + 1:
            prev = ix
            continue
        boxes.append(IntervalBox(lo0 + run_start * w, lo0 + (prev + 1) * w))
        run_start = prev = ix
    boxes.append(IntervalBox(lo0 + run_start * w, lo0 + (prev + 1) * w))
    if len(boxes) == 1:
        return RegionSpec.box(boxes[0].lo, boxes[0].hi)
    return RegionSpec.box_union(boxes)


def _cert_diameter(cert: LyapunovCertificate) -> float:
    return float(np.linalg.norm(cert.D.hi - cert.D.lo))


def construct_negV(cert: LyapunovCertificate) -> BarrierCertificate:
    """Negate a decrease certificate into a barrier for its own cell set.

    B = -V is zero exactly on the certified set and negative outside it,
    and its worst-case flow push is bounded below by -alpha0(B) with
    alpha0(s) = -alpha3(alpha2^-1(-s)) on the recorded domain.  The returned
    certificate is unverified; run certify() on it to obtain margins.
    """
    cand = _ShiftedNegV(cert.candidate, 0.0)
    diam = _cert_diameter(cert)
    lo = -float(cert.alpha1(min(diam, cert.alpha1.s_max)))
    alpha0 = ExtendedClassKFn("neg_compose", lo=lo, hi=0.0,
                              alpha2=cert.alpha2, alpha3=cert.alpha3)
    notes = ("B is the negated certificate value: zero exactly on the "
             "certified cells, negative elsewhere",
             "worst-case flow push of B is bounded below by "
             "alpha3(alpha2^-1(-B)), recorded as -alpha0(B)")
    return BarrierCertificate(
        B=cand.expr, kind="negV", delta_prime=cert.delta_prime,
        W=_member_region(cert.A), U=RegionSpec.empty(),
        alpha0=alpha0, domain=cert.D, resolution=cert.resolution,
        time_domain=cert.time_domain, alpha2=cert.alpha2, alpha3=cert.alpha3,
        notes=notes,
        meta={"certificate_margins":
              {k: float(v) for k, v in cert.margins.items()}},
        candidate=cand)


@dataclass(frozen=True)
class LevelChoice:
    """Largest admissible level and the neighborhood that witnesses it."""

    c: float
    neighborhood: IntervalBox
    cells: int
    limiting_value: float
    notes: tuple = ()

    def __float__(self):
        return self.c

    def to_dict(self) -> dict:
        return {"c": self.c,
                "neighborhood": {"lo": self.neighborhood.lo.tolist(),
                                 "hi": self.neighborhood.hi.tolist()},
                "cells": self.cells,
                "limiting_value": _jnum(self.limiting_value),
                "notes": list(self.notes)}


def choose_level_c(cert: LyapunovCertificate,
                   U: Optional[RegionSpec]) -> LevelChoice:
    """Largest level whose sublevel cells keep one cell of clearance to U.

    Cells meeting U (open-interior semantics), their one-cell dilation and
    the domain edge are forbidden; the level sits just below the smallest
    certified lower bound of V on forbidden cells.  With no unsafe region
    the level is simply the maximum of V over the box.  Raises ValueError
    when U reaches the certified set at this resolution.
    """
    lat = _lattice_over(cert.D, cert.resolution)
    cand = cert.candidate
    v_lo = np.empty(lat.count)
    v_hi = np.empty(lat.count)
    for ci in range(lat.count):
        iv = cand.value_interval(lat.cell_box(ci))
        v_lo[ci], v_hi[ci] = iv.lo, iv.hi

    if U is None or U.is_syntactically_empty:
        c = float(np.max(v_hi))
        return LevelChoice(c, cert.D, lat.count, math.inf,
                           ("no unsafe region: level is the maximum value "
                            "over the box",))

    umask = _region_cells(U, lat, shrink=1e-9)
    dil = ndimage.binary_dilation(
        umask.reshape(lat.shape),
        structure=np.ones((3,) * len(lat.shape), dtype=bool)).ravel()
    edge = np.zeros(lat.shape, dtype=bool)
    for ax in range(len(lat.shape)):
        sl = [slice(None)] * len(lat.shape)
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    forbidden = dil | edge.ravel()
    if not np.any(forbidden):
        c = float(np.max(v_hi))
        return LevelChoice(c, cert.D, lat.count, math.inf,
                           ("unsafe region does not meet the box",))
    vstar = float(np.min(v_lo[forbidden]))
    if vstar <= _STRICT_FLOOR:
        raise ValueError("no admissible level: the unsafe region reaches "
                         "the certified set at this resolution")
    member = v_lo < vstar
    idx = np.argwhere(member.reshape(lat.shape))
    lo0 = _lattice_origin(lat)
    lo = lo0 + idx.min(axis=0) * lat.widths
    hi = lo0 + (idx.max(axis=0) + 1) * lat.widths
    c = vstar * (1.0 - 1e-9)
    return LevelChoice(
        float(c), IntervalBox(lo, hi), int(np.count_nonzero(member)), vstar,
        ("level sits one cell short of the unsafe region",))


def construct_levelled(cert: LyapunovCertificate, c,
                       sys: Optional[SystemSpec] = None,
                       W: Optional[RegionSpec] = None,
                       U: Optional[RegionSpec] = None,
                       conditions: Optional[Sequence[str]] = None,
                       resolution: Optional[float] = None
                       ) -> BarrierCertificate:
    """Shift a decrease certificate to B = c - V.

    The zero level of B encloses the certified set with clearance c, and
    the worst-case flow push at that level is at least alpha3(alpha2^-1(c)).
    Passing the system runs certify() immediately (the full definition, the
    strict variant and the level conditions by default) and raises
    CertificationError if any requested condition fails.
    """
    level = float(c)
    if not (level > 0):
        raise ValueError("the level must be positive")
    diam = _cert_diameter(cert)
    if level > cert.alpha2.a * min(diam, cert.alpha2.s_max) ** cert.alpha2.p:
        raise ValueError("level exceeds the certified value range")
    cand = _ShiftedNegV(cert.candidate, level)
    lo = level - float(cert.alpha2(min(diam, cert.alpha2.s_max)))
    alpha0 = ExtendedClassKFn("level_compose", lo=lo, hi=level, level=level,
                              alpha2=cert.alpha2, alpha3=cert.alpha3)
    analytic = float(cert.alpha3(cert.alpha2.inverse(level)))
    meta = {"zero_level_margin_analytic": analytic}
    if isinstance(c, LevelChoice):
        meta["level_choice"] = c.to_dict()
    notes = ("zero level of B encloses the certified set with clearance c",
             "flow push at the zero level is at least alpha3(alpha2^-1(c))")
    bc = BarrierCertificate(
        B=cand.expr, kind="levelled", delta_prime=cert.delta_prime,
        W=W if W is not None else _member_region(cert.A),
        U=U if U is not None else RegionSpec.empty(),
        alpha0=alpha0, domain=cert.D,
        resolution=float(resolution) if resolution else cert.resolution,
        time_domain=cert.time_domain, level_c=level, alpha2=cert.alpha2,
        alpha3=cert.alpha3, notes=notes, meta=meta, candidate=cand)
    if sys is None:
        return bc
    if conditions is None:
        conditions = ("DEF4", "RATSCHAN_STRICT", "BC1", "PB") \
            if cert.time_domain == "continuous" \
            else ("DEF10", "DTB0", "DTB1", "BARRIERDT")
    out = certify(bc, sys, conditions=conditions)
    if not out.ok:
        bad = ", ".join(out.failures)
        raise CertificationError(
            f"levelled barrier failed {bad} at grid rigor", out)
    return out


def construct_reciprocal(cert: LyapunovCertificate, c,
                         sys: Optional[SystemSpec] = None,
                         conditions: Optional[Sequence[str]] = None,
                         resolution: Optional[float] = None
                         ) -> BarrierCertificate:
    """Reciprocal barrier B = 1/(c - V) on the open sublevel region.

    The two-sided reciprocal bounds hold identically (identity comparison
    functions, zero slack); the flow-growth bound is fitted during
    certification, restricted to sublevel cells eroded by one layer.
    Passing the system runs certify() immediately and raises
    CertificationError on failure.
    """
    level = float(c)
    if not (level > 0):
        raise ValueError("the level must be positive")
    cand = _ReciprocalOfV(cert.candidate, level)
    notes = ("reciprocal of the certificate clearance: defined where "
             "c - V > 0, growing toward the level set",
             "verification is restricted to sublevel cells minus one "
             "boundary layer")
    bc = BarrierCertificate(
        B=cand.expr, kind="reciprocal", delta_prime=cert.delta_prime,
        W=RegionSpec.empty(), U=RegionSpec.empty(), domain=cert.D,
        resolution=float(resolution) if resolution else cert.resolution,
        time_domain=cert.time_domain, level_c=level, alpha2=cert.alpha2,
        alpha3=cert.alpha3, notes=notes,
        meta={"rb_alpha1": {"a": 1.0, "p": 1.0},
              "rb_alpha2": {"a": 1.0, "p": 1.0}},
        candidate=cand)
    if sys is None:
        return bc
    if conditions is None:
        conditions = ("RB",) if cert.time_domain == "continuous" \
            else ("DTRB",)
    out = certify(bc, sys, conditions=conditions)
    if not out.ok:
        bad = ", ".join(out.failures)
        raise CertificationError(
            f"reciprocal barrier failed {bad} at grid rigor", out)
    return out


# ---------------------------------------------------------------------------
# trajectory replay


@dataclass(frozen=True)
class ReplayReport:
    """Sampled invariance check of the nonnegative region of a barrier."""

    trials: int
    exits: int
    blown: int
    min_value: float
    first_exit: Optional[tuple]
    horizon: float
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return self.exits == 0

    def to_json(self) -> str:
        return json.dumps({
            "schema": 1, "trials": self.trials, "exits": self.exits,
            "blown": self.blown, "min_value": _jnum(self.min_value),
            "first_exit": list(self.first_exit) if self.first_exit else None,
            "horizon": self.horizon, "ok": self.ok,
            "notes": list(self.notes)}, sort_keys=True)


class _MinTracker:
    def __init__(self, cand, tol: float = 1e-12):
        self.cand = cand
        self.tol = tol
        self.min = None
        self.first_exit = None

    def __call__(self, t, states, alive):
        with np.errstate(all="ignore"):
            v = self.cand.value(states)
        v = np.where(np.isfinite(v), v, -np.inf)
        if self.min is None:
            self.min = v.copy()
        else:
            fresh = (v < -self.tol) & (self.min >= -self.tol)
            if self.first_exit is None and np.any(fresh):
                row = int(np.flatnonzero(fresh)[0])
                self.first_exit = tuple(float(x) for x in states[row])
            np.minimum(self.min, v, out=self.min)


def replay_invariance(B, sys: SystemSpec,
                      delta_prime: Optional[float] = None,
                      domain: Optional[IntervalBox] = None,
                      resolution: Optional[float] = None,
                      trials: int = 1000, horizon: Optional[float] = None,
                      step: float = 0.01, seed: int = 0) -> ReplayReport:
    """Sample trajectories from the nonnegative region and count exits.

    Starts are drawn uniformly from cells where B is nonnegative at the
    center (rejecting points with B < 0), then driven by a random-ball
    disturbance policy and an adversarial one aligned against B.  An exit
    is any recorded state with B below zero, including blow-ups.
    """
    if isinstance(B, BarrierCertificate):
        cand = B.candidate
        expr = B.B
        delta_prime = B.delta_prime if delta_prime is None else delta_prime
        domain = domain if domain is not None else B.domain
        resolution = resolution if resolution is not None else B.resolution
    else:
        expr = parse(B) if isinstance(B, str) else B
        cand = _ExprBarrier(expr)
    if domain is None or resolution is None:
        raise ValueError("replay needs a sampling box and a resolution")
    delta_prime = float(delta_prime or 0.0)
    if horizon is None:
        horizon = 400.0 if sys.time_domain == "discrete" else 60.0

    lat = _lattice_over(domain, float(resolution))
    with np.errstate(all="ignore"):
        vals = cand.value(lat.centers)
    inset = np.flatnonzero(vals >= 0)
    if inset.size == 0:
        raise ValueError("no cells with a nonnegative barrier value")

    rng = np.random.default_rng(seed)
    starts = np.empty((trials, lat.centers.shape[1]))
    filled = 0
    for _ in range(200):
        if filled >= trials:
            break
        need = trials - filled
        cells = rng.choice(inset, size=need)
        pts = lat.centers[cells] + (rng.random((need, starts.shape[1])) - 0.5) \
            * lat.widths
        with np.errstate(all="ignore"):
            keep = cand.value(pts) >= 0
        k = int(np.count_nonzero(keep))
        starts[filled:filled + k] = pts[keep]
        filled += k
    if filled < trials:
        raise ValueError("could not sample enough nonnegative starts")

    policies = [DisturbancePolicy.random(delta_prime, seed=seed)]
    if delta_prime > 0:
        # push straight down the barrier's own gradient
        policies.append(DisturbancePolicy.extremal(
            delta_prime, direction_fn=lambda x: -cand.gradient(x)))
    tracker = _MinTracker(cand)
    blown = 0
    share = trials // len(policies)
    for i, pol in enumerate(policies):
        block = starts[i * share: (i + 1) * share if i + 1 < len(policies)
                       else trials]
        res = rollout_batch(sys, block, pol, horizon, step=step,
                            dwell=1.0 if sys.time_domain == "discrete" else None,
                            rng=np.random.default_rng(seed + i),
                            observer=tracker)
        blown += int(np.count_nonzero(res.blown))
    exits = int(np.count_nonzero(tracker.min < -1e-12))
    return ReplayReport(
        trials=trials, exits=exits, blown=blown,
        min_value=float(np.min(tracker.min)), first_exit=tracker.first_exit,
        horizon=float(horizon),
        notes=(f"policies: {len(policies)} (random ball"
               + (", adversarial descent)" if len(policies) > 1 else ")"),))
