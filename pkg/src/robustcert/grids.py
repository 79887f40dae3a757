"""Grid-backed set representation.

A GridSet partitions an axis-aligned domain into uniform cells and stores a
membership value per cell: OUT, BOUNDARY (touches the represented set), or IN
(entirely contained).  The `flag` records the approximation direction: an
"over" set contains the true set inside the union of IN and BOUNDARY cells,
an "under" set only marks cells known to touch or lie inside the true set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .intervals import IntervalBox
from .regions import RegionSpec

OUT, BOUNDARY, IN = 0, 1, 2


@dataclass
class GridSet:
    domain: IntervalBox
    cells: np.ndarray  # int8, shape (m1, ..., mn)
    flag: str = "over"  # over | under
    delta: float = 0.0
    escaped: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != self.domain.n:
            raise ValueError("cell array rank must match domain dimension")
        if self.flag not in ("over", "under"):
            raise ValueError(f"flag must be 'over' or 'under', got {self.flag!r}")

    # -- geometry ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def shape(self) -> tuple:
        return self.cells.shape

    @property
    def widths(self) -> np.ndarray:
        return self.domain.widths / np.asarray(self.shape, dtype=float)

    @property
    def half_diag(self) -> float:
        return float(np.linalg.norm(self.widths)) / 2.0

    @property
    def member_mask(self) -> np.ndarray:
        return self.cells > OUT

    @property
    def num_members(self) -> int:
        return int(np.count_nonzero(self.member_mask))

    def is_empty(self) -> bool:
        return self.num_members == 0

    def centers_all(self) -> np.ndarray:
        """Centers of every cell, shape (prod(shape), n), C order."""
        axes = [self.domain.lo[i] + (np.arange(m) + 0.5) * self.widths[i]
                for i, m in enumerate(self.shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def member_centers(self) -> np.ndarray:
        idx = np.argwhere(self.member_mask)
        return self.domain.lo + (idx + 0.5) * self.widths

    def index_centers(self, idx: np.ndarray) -> np.ndarray:
        return self.domain.lo + (np.asarray(idx, dtype=float) + 0.5) * self.widths

    def cell_box(self, idx) -> IntervalBox:
        idx = np.asarray(idx, dtype=float)
        lo = self.domain.lo + idx * self.widths
        return IntervalBox(lo, lo + self.widths)

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Map points (..., n) to integer cell indices; also return validity."""
        x = np.asarray(x, dtype=float)
        rel = (x - self.domain.lo) / self.widths
        idx = np.floor(rel).astype(np.int64)
        valid = np.all((x >= self.domain.lo) & (x <= self.domain.hi), axis=-1)
        # points exactly on the upper face belong to the last cell
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return idx, valid

    def member_of(self, x) -> np.ndarray:
        """True where the point lies in a member cell."""
        idx, valid = self.locate(x)
        out = np.zeros(np.asarray(x).shape[:-1], dtype=bool)
        if np.any(valid):
            flat = np.ravel_multi_index(
                tuple(np.moveaxis(idx[valid], -1, 0)), self.shape)
            out[valid] = self.cells.ravel()[flat] > OUT
        return out

    def member_bounding_box(self) -> IntervalBox | None:
        idx = np.argwhere(self.member_mask)
        if idx.size == 0:
            return None
        lo = self.domain.lo + idx.min(axis=0) * self.widths
        hi = self.domain.lo + (idx.max(axis=0) + 1) * self.widths
        return IntervalBox(lo, hi)

    def covers_box(self, box: IntervalBox) -> bool:
        """True if the box lies inside the domain and only meets member cells."""
        w = self.widths
        if np.any(box.lo < self.domain.lo - 1e-12 * w) or \
                np.any(box.hi > self.domain.hi + 1e-12 * w):
            return False
        # nudge by a relative epsilon so faces on cell boundaries do not
        # drag in the neighbouring cell
        rel_lo = (box.lo - self.domain.lo) / w + 1e-9
        rel_hi = (box.hi - self.domain.lo) / w - 1e-9
        i_lo = np.clip(np.floor(rel_lo).astype(int), 0, np.asarray(self.shape) - 1)
        i_hi = np.clip(np.floor(rel_hi).astype(int), 0, np.asarray(self.shape) - 1)
        if np.any(i_hi < i_lo):
            return True  # box thinner than the nudge; treat as empty slice
        sl = tuple(slice(a, b + 1) for a, b in zip(i_lo, i_hi))
        return bool(np.all(self.cells[sl] > OUT))

    def touches_domain_edge(self) -> bool:
        mask = self.member_mask
        for axis in range(self.n):
            if np.any(np.take(mask, 0, axis=axis)) or np.any(np.take(mask, -1, axis=axis)):
                return True
        return False

    # -- construction ------------------------------------------------------

    @staticmethod
    def empty_like_domain(domain: IntervalBox, resolution: float,
                          flag: str = "over", delta: float = 0.0) -> "GridSet":
        shape = tuple(max(1, int(round(w / resolution))) for w in domain.widths)
        return GridSet(domain, np.zeros(shape, dtype=np.int8), flag=flag, delta=delta,
                       provenance={"resolution": resolution})

    @staticmethod
    def from_region(region: RegionSpec, domain: IntervalBox, resolution: float,
                    flag: str = "over", delta: float = 0.0) -> "GridSet":
        """Rasterise a region: IN cells are provably inside, BOUNDARY may touch it.

        With flag="under" only the provably-inside cells are marked.
        """
        gs = GridSet.empty_like_domain(domain, resolution, flag=flag, delta=delta)
        region.check_dimension(domain.n)
        if region.is_syntactically_empty:
            return gs
        bb = region.bounding_box(fallback=domain)
        lo_idx, _ = gs.locate(np.maximum(bb.lo, domain.lo + 1e-12 * gs.widths))
        hi_idx, _ = gs.locate(np.minimum(bb.hi, domain.hi - 1e-12 * gs.widths))
        ranges = [np.arange(lo_idx[i], hi_idx[i] + 1) for i in range(gs.n)]
        for idx in _iter_index_product(ranges):
            rel = region.classify_cell(gs.cell_box(idx))
            if rel == "inside":
                gs.cells[idx] = IN
            elif rel == "partial" and flag == "over":
                gs.cells[idx] = BOUNDARY
        return gs

    def copy(self) -> "GridSet":
        return GridSet(self.domain, self.cells.copy(), flag=self.flag,
                       delta=self.delta, escaped=self.escaped,
                       provenance=dict(self.provenance))

    def dilated(self, layers: int = 1) -> "GridSet":
        """Grow membership by whole cell layers (box connectivity)."""
        structure = np.ones((3,) * self.n, dtype=bool)
        mask = ndimage.binary_dilation(self.member_mask, structure=structure,
                                       iterations=layers)
        cells = np.where(mask, np.maximum(self.cells, BOUNDARY), self.cells)
        out = self.copy()
        out.cells = cells.astype(np.int8)
        return out

    def boundary_member_indices(self) -> np.ndarray:
        """Member cells adjacent to at least one non-member cell."""
        mask = self.member_mask
        structure = np.ones((3,) * self.n, dtype=bool)
        interior = ndimage.binary_erosion(mask, structure=structure, border_value=0)
        return np.argwhere(mask & ~interior)

    # -- set comparisons ---------------------------------------------------

    def covers(self, other: "GridSet") -> bool:
        """True if this member set contains the other's, cell-by-cell.

        Requires an identical domain; differing resolutions are compared by
        sampling the other's member centers.
        """
        if self.shape == other.shape and self.domain == other.domain:
            return bool(np.all(self.member_mask >= other.member_mask))
        centers = other.member_centers()
        if centers.size == 0:
            return True
        return bool(np.all(self.member_of(centers)))

    def same_members(self, other: "GridSet") -> bool:
        return (self.shape == other.shape
                and bool(np.all(self.member_mask == other.member_mask)))

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        flat = self.cells.ravel(order="C")
        rle = []
        if flat.size:
            change = np.flatnonzero(np.diff(flat)) + 1
            starts = np.concatenate(([0], change))
            ends = np.concatenate((change, [flat.size]))
            rle = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
        payload = {
            "schema": 1,
            "domain": {"lo": self.domain.lo.tolist(), "hi": self.domain.hi.tolist()},
            "shape": list(self.shape),
            "flag": self.flag,
            "delta": self.delta,
            "escaped": self.escaped,
            "rle": rle,
            "provenance": self.provenance,
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "GridSet":
        d = json.loads(text)
        flat = np.concatenate([np.full(c, v, dtype=np.int8) for v, c in d["rle"]]) \
            if d["rle"] else np.zeros(0, dtype=np.int8)
        cells = flat.reshape(d["shape"])
        return GridSet(IntervalBox(d["domain"]["lo"], d["domain"]["hi"]), cells,
                       flag=d["flag"], delta=d["delta"], escaped=d["escaped"],
                       provenance=d.get("provenance", {}))

    def to_csv(self) -> str:
        """Member cell centers with their membership value."""
        lines = [",".join(f"x{i + 1}" for i in range(self.n)) + ",value"]
        idx = np.argwhere(self.member_mask)
        centers = self.domain.lo + (idx + 0.5) * self.widths
        values = self.cells[tuple(idx.T)]
        for c, v in zip(centers, values):
            coord = ",".join(repr(float(ci)) for ci in c)
            lines.append(f"{coord},{int(v)}")
        return "\n".join(lines) + "\n"


def _iter_index_product(ranges):
    grids = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=-1)
    for row in idx:
        yield tuple(int(v) for v in row)


class DistanceField:
    """Distance to a GridSet's member region, via nearest member center.

    dist(x) = max(0, |x - nearest center| - half cell diagonal), which is
    within one half-diagonal of the true distance to the union of member
    cells and is exactly zero inside them.
    """

    def __init__(self, grid: GridSet):
        centers = grid.member_centers()
        if centers.shape[0] == 0:
            raise ValueError("distance field over an empty grid set")
        self.grid = grid
        self.centers = centers
        self.tree = cKDTree(centers)
        self.half_diag = grid.half_diag

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d, _ = self.tree.query(x.reshape(-1, x.shape[-1]))
        d = np.maximum(0.0, d - self.half_diag)
        return d.reshape(x.shape[:-1])

    def outward_direction(self, x) -> np.ndarray:
        """Unit vector from the nearest member center toward x; 0 at distance 0."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        d, i = self.tree.query(flat)
        vec = flat - self.centers[i]
        norm = np.linalg.norm(vec, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm > 0, vec / norm, 0.0)
        return unit.reshape(x.shape)
