"""Interval arithmetic primitives.

Scalar intervals use the natural extension of each operation.  Endpoints of
arithmetic ops are computed with the same float primitives used by point
evaluation, so corner values sampled inside an interval can never escape the
enclosure.  Transcendental results are additionally widened by a couple of
ulps to absorb any non-monotone rounding of the underlying libm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_NUDGE_ULPS = 2


def _down(x: float) -> float:
    for _ in range(_NUDGE_ULPS):
        x = math.nextafter(x, -math.inf)
    return x


def _up(x: float) -> float:
    for _ in range(_NUDGE_ULPS):
        x = math.nextafter(x, math.inf)
    return x


class IntervalDomainError(ValueError):
    """Operation applied outside its mathematical domain, e.g. 1/[-1, 1]."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"non-finite interval [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @staticmethod
    def point(v: float) -> "Interval":
        return Interval(float(v), float(v))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self) -> float:
        """Largest absolute value contained in the interval."""
        return max(abs(self.lo), abs(self.hi))

    def contains(self, v: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= v <= self.hi + slack

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        c = (self.lo * other.lo, self.lo * other.hi,
             self.hi * other.lo, self.hi * other.hi)
        return Interval(min(c), max(c))

    def __truediv__(self, other: "Interval") -> "Interval":
        if other.lo <= 0.0 <= other.hi:
            raise IntervalDomainError(
                f"division by interval [{other.lo}, {other.hi}] containing zero")
        c = (self.lo / other.lo, self.lo / other.hi,
             self.hi / other.lo, self.hi / other.hi)
        return Interval(min(c), max(c))

    def pow_int(self, k: int) -> "Interval":
        if k == 0:
            return Interval(1.0, 1.0)
        if k < 0:
            return Interval(1.0, 1.0) / self.pow_int(-k)
        lo_k, hi_k = self.lo ** k, self.hi ** k
        if k % 2 == 1:
            return Interval(_down(lo_k), _up(hi_k))
        # even power: minimum at zero if the interval straddles it
        if self.lo <= 0.0 <= self.hi:
            return Interval(0.0, _up(max(lo_k, hi_k)))
        return Interval(_down(min(lo_k, hi_k)), _up(max(lo_k, hi_k)))

    def exp(self) -> "Interval":
        return Interval(_down(math.exp(self.lo)), _up(math.exp(self.hi)))

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise IntervalDomainError(f"sqrt of interval [{self.lo}, {self.hi}] below zero")
        return Interval(math.sqrt(self.lo), math.sqrt(self.hi))

    def abs(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def min(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), min(self.hi, other.hi))

    def max(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), max(self.hi, other.hi))

    def smoothplus(self, kappa: float) -> "Interval":
        # monotone increasing in the argument
        return Interval(_down(_sp_scalar(self.lo, kappa)),
                        _up(_sp_scalar(self.hi, kappa)))

    def sigmoid(self, kappa: float) -> "Interval":
        # derivative of smoothplus; monotone increasing, range (0, 1)
        return Interval(max(0.0, _down(_sigmoid_scalar(kappa * self.lo))),
                        min(1.0, _up(_sigmoid_scalar(kappa * self.hi))))

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def widened(self, r: float) -> "Interval":
        return Interval(self.lo - r, self.hi + r)

    def __repr__(self) -> str:
        return f"[{self.lo:.17g}, {self.hi:.17g}]"


def _sp_scalar(u: float, kappa: float) -> float:
    # log(1 + exp(kappa * u)) / kappa without overflow
    z = kappa * u
    if z > 0:
        return u + math.log1p(math.exp(-z)) / kappa
    return math.log1p(math.exp(z)) / kappa


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class IntervalBox:
    """Axis-aligned box in R^n with numpy endpoint arrays."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box endpoints must be 1-d arrays of equal length")
        if np.any(self.lo > self.hi):
            raise ValueError(f"empty box lo={self.lo} hi={self.hi}")

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def interval(self, i: int) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def intervals(self) -> list[Interval]:
        return [self.interval(i) for i in range(self.n)]

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.logical_and(
            np.all(x >= self.lo - slack, axis=-1),
            np.all(x <= self.hi + slack, axis=-1),
        )

    def contains_box(self, other: "IntervalBox", slack: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - slack)
                    and np.all(other.hi <= self.hi + slack))

    def intersects_box(self, other: "IntervalBox") -> bool:
        return bool(np.all(other.hi >= self.lo) and np.all(other.lo <= self.hi))

    def dilated(self, r: float) -> "IntervalBox":
        return IntervalBox(self.lo - r, self.hi + r)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.n))

    def corners(self) -> np.ndarray:
        if self.n > 16:
            raise ValueError("corner enumeration only supported up to 16 dims")
        bits = np.indices((2,) * self.n).reshape(self.n, -1).T
        return np.where(bits == 0, self.lo, self.hi).astype(float)

    def __repr__(self) -> str:
        parts = ", ".join(f"[{a:g}, {b:g}]" for a, b in zip(self.lo, self.hi))
        return f"IntervalBox({parts})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, IntervalBox)
                and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))
