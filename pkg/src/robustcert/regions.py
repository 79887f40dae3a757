"""Region descriptions used for initial sets W and unsafe sets U.

A region is an axis-aligned box, a finite union of boxes, or a sub/superlevel
set of an expression.  Regions are treated as closed sets.  Cell
classification against a box uses interval evaluation, so "inside" and
"outside" verdicts are conservative and "partial" absorbs the uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exprlang import Expr, eval_expr, eval_interval, parse, to_string, max_var_index
from .intervals import IntervalBox


@dataclass
class RegionSpec:
    form: str  # box | box_union | sublevel | superlevel
    boxes: list[IntervalBox] = field(default_factory=list)
    expr: Expr | None = None
    level: float = 0.0

    def __post_init__(self):
        if self.form in ("box", "box_union"):
            if self.form == "box" and len(self.boxes) != 1:
                raise ValueError("box region requires exactly one box")
            dims = {b.n for b in self.boxes}
            if len(dims) > 1:
                raise ValueError("boxes in a union must share a dimension")
        elif self.form in ("sublevel", "superlevel"):
            if self.expr is None:
                raise ValueError(f"{self.form} region requires an expression")
        else:
            raise ValueError(f"unknown region form {self.form!r}")

    @staticmethod
    def box(lo, hi) -> "RegionSpec":
        return RegionSpec("box", boxes=[IntervalBox(lo, hi)])

    @staticmethod
    def box_union(boxes: list[IntervalBox]) -> "RegionSpec":
        return RegionSpec("box_union", boxes=list(boxes))

    @staticmethod
    def sublevel(expr, level: float) -> "RegionSpec":
        e = parse(expr) if isinstance(expr, str) else expr
        return RegionSpec("sublevel", expr=e, level=float(level))

    @staticmethod
    def superlevel(expr, level: float) -> "RegionSpec":
        e = parse(expr) if isinstance(expr, str) else expr
        return RegionSpec("superlevel", expr=e, level=float(level))

    @staticmethod
    def empty() -> "RegionSpec":
        return RegionSpec("box_union", boxes=[])

    @property
    def is_syntactically_empty(self) -> bool:
        return self.form == "box_union" and not self.boxes

    def check_dimension(self, n: int) -> None:
        for b in self.boxes:
            if b.n != n:
                raise ValueError(f"region box has dimension {b.n}, expected {n}")
        if self.expr is not None and max_var_index(self.expr) >= n:
            raise ValueError(
                f"region expression uses x{max_var_index(self.expr) + 1}, "
                f"but the system has dimension {n}")

    def contains(self, x) -> np.ndarray:
        """Pointwise membership; x has shape (..., n)."""
        x = np.asarray(x, dtype=float)
        if self.form in ("box", "box_union"):
            if not self.boxes:
                return np.zeros(x.shape[:-1], dtype=bool)
            return np.any([b.contains(x) for b in self.boxes], axis=0)
        vals = eval_expr(self.expr, x)
        if self.form == "sublevel":
            return vals <= self.level
        return vals >= self.level

    def classify_cell(self, cell: IntervalBox) -> str:
        """Return 'inside', 'outside', or 'partial' for an axis-aligned cell."""
        if self.form in ("box", "box_union"):
            if any(b.contains_box(cell) for b in self.boxes):
                return "inside"
            if any(b.intersects_box(cell) for b in self.boxes):
                return "partial"
            return "outside"
        iv = eval_interval(self.expr, cell)
        if self.form == "sublevel":
            if iv.hi <= self.level:
                return "inside"
            if iv.lo > self.level:
                return "outside"
        else:
            if iv.lo >= self.level:
                return "inside"
            if iv.hi < self.level:
                return "outside"
        return "partial"

    def bounding_box(self, fallback: IntervalBox | None = None) -> IntervalBox | None:
        """Hull of explicit boxes; level sets fall back to the provided box."""
        if self.form in ("box", "box_union"):
            if not self.boxes:
                return None
            lo = np.min([b.lo for b in self.boxes], axis=0)
            hi = np.max([b.hi for b in self.boxes], axis=0)
            return IntervalBox(lo, hi)
        return fallback

    def to_dict(self) -> dict:
        if self.form in ("box", "box_union"):
            return {"form": self.form,
                    "boxes": [{"lo": b.lo.tolist(), "hi": b.hi.tolist()} for b in self.boxes]}
        return {"form": self.form, "expr": to_string(self.expr), "level": self.level}

    @staticmethod
    def from_dict(d: dict) -> "RegionSpec":
        form = d.get("form")
        if form in ("box", "box_union"):
            boxes = [IntervalBox(b["lo"], b["hi"]) for b in d.get("boxes", [])]
            if form == "box":
                return RegionSpec("box", boxes=boxes)
            return RegionSpec("box_union", boxes=boxes)
        if form in ("sublevel", "superlevel"):
            return RegionSpec(form, expr=parse(d["expr"]), level=float(d["level"]))
        raise ValueError(f"unknown region form {form!r}")
