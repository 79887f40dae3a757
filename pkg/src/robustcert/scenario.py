"""Scenario files: one TOML document that fixes a run's inputs.

A scenario is a flat two-level document (tables of plain keys, no deeper
nesting) so files stay diff-friendly and hand-writable:

    [system]
    f = ["-x1"]                  # one expression per state variable
    time_domain = "continuous"   # or "discrete"

    [perturbation]
    delta = 0.2                  # disturbance bound of the analyzed system
    delta_prime = 0.1            # smaller bound used by certification

    [sets]
    W_form = "box"               # box | box_union | sublevel | superlevel
    W_lo = [-0.1]
    W_hi = [0.1]
    U_form = "superlevel"
    U_expr = "abs(x1)"
    U_level = 0.5

    [grid]
    domain_lo = [-1.0]
    domain_hi = [1.0]
    resolution = 1e-3

    [solver]
    step = 0.01
    horizon = 50.0
    seed = 0

Task-specific tables ([simulate], [reach], [ruas], [synthesis], [barrier],
[steering]) carry per-command options and are read by the command that
needs them.  Loading validates the core tables: expressions must parse,
dimensions must agree, delta_prime must stay below delta when both are
given, and W and U must not overlap.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib as _toml  # py311+
except ImportError:
    import tomli as _toml

from .exprlang import ExprSyntaxError, parse
from .intervals import IntervalBox
from .regions import RegionSpec
from .dynamics import SystemSpec

_CORE_TABLES = ("system", "perturbation", "sets", "grid", "solver")
_TASK_TABLES = ("simulate", "reach", "ruas", "synthesis", "barrier",
                "steering")


class ScenarioError(ValueError):
    """Malformed scenario file; message carries file and line context."""


def _line_of(text: str, table: str, key: Optional[str] = None) -> Optional[int]:
    """Best-effort line number of a table header or of a key inside it."""
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.strip().startswith(f"[{table}]"):
            start = i
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    for i in range(start + 1, len(lines)):
        stripped = lines[i].strip()
        if stripped.startswith("["):
            break
        if stripped.startswith(key) and "=" in stripped:
            return i + 1
    return start + 1


@dataclass
class Scenario:
    """Validated run inputs plus the raw task tables."""

    path: str
    sha256: str
    system: SystemSpec
    delta: Optional[float] = None
    delta_prime: Optional[float] = None
    W: Optional[RegionSpec] = None
    U: Optional[RegionSpec] = None
    domain: Optional[IntervalBox] = None
    resolution: Optional[float] = None
    solver: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))


def _fail(path: str, text: str, table: str, key: Optional[str],
          message: str) -> ScenarioError:
    line = _line_of(text, table, key)
    where = f"{path}:{line}" if line else path
    label = f"[{table}]" + (f" {key}" if key else "")
    return ScenarioError(f"{where}: {label}: {message}")


def _number(raw, path, text, table, key, *, positive=False,
            nonnegative=False) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise _fail(path, text, table, key, "expected a number")
    v = float(raw)
    if positive and not v > 0:
        raise _fail(path, text, table, key, "must be positive")
    if nonnegative and v < 0:
        raise _fail(path, text, table, key, "must be nonnegative")
    return v


def _vector(raw, path, text, table, key, n=None) -> np.ndarray:
    if not isinstance(raw, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in raw):
        raise _fail(path, text, table, key, "expected an array of numbers")
    v = np.asarray(raw, dtype=float)
    if n is not None and v.size != n:
        raise _fail(path, text, table, key,
                    f"expected {n} entries, got {v.size}")
    return v


def _parse_region(tbl: dict, prefix: str, n: int, path: str,
                  text: str) -> Optional[RegionSpec]:
    form = tbl.get(f"{prefix}_form")
    if form is None:
        return None
    if form == "box":
        lo = _vector(tbl.get(f"{prefix}_lo"), path, text, "sets",
                     f"{prefix}_lo", n)
        hi = _vector(tbl.get(f"{prefix}_hi"), path, text, "sets",
                     f"{prefix}_hi", n)
        if np.any(lo > hi):
            raise _fail(path, text, "sets", f"{prefix}_lo",
                        "box has lo > hi")
        return RegionSpec.box(lo, hi)
    if form == "box_union":
        raw = tbl.get(f"{prefix}_boxes")
        if not isinstance(raw, list) or not raw:
            raise _fail(path, text, "sets", f"{prefix}_boxes",
                        "expected a nonempty array of [lo, hi] pairs")
        boxes = []
        for pair in raw:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise _fail(path, text, "sets", f"{prefix}_boxes",
                            "each entry must be a [lo, hi] pair")
            lo = _vector(pair[0], path, text, "sets", f"{prefix}_boxes", n)
            hi = _vector(pair[1], path, text, "sets", f"{prefix}_boxes", n)
            boxes.append(IntervalBox(lo, hi))
        return RegionSpec.box_union(boxes)
    if form in ("sublevel", "superlevel"):
        raw = tbl.get(f"{prefix}_expr")
        if not isinstance(raw, str):
            raise _fail(path, text, "sets", f"{prefix}_expr",
                        "expected an expression string")
        try:
            expr = parse(raw)
        except ExprSyntaxError as err:
            raise _fail(path, text, "sets", f"{prefix}_expr", str(err))
        level = _number(tbl.get(f"{prefix}_level"), path, text, "sets",
                        f"{prefix}_level")
        region = (RegionSpec.sublevel if form == "sublevel"
                  else RegionSpec.superlevel)(expr, level)
        region.check_dimension(n)
        return region
    raise _fail(path, text, "sets", f"{prefix}_form",
                f"unknown region form {form!r}")


def _definitely_overlap(W: RegionSpec, U: RegionSpec,
                        domain: Optional[IntervalBox]) -> bool:
    """Coarse certain-overlap test used at load time."""
    if W.form in ("box", "box_union") and U.form in ("box", "box_union"):
        return any(a.intersects_box(b) and
                   np.all(np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
                          > 1e-12)
                   for a in W.boxes for b in U.boxes)
    if domain is None:
        return False
    shape = (17,) * domain.n
    widths = (domain.hi - domain.lo) / shape[0]
    for flat in range(shape[0] ** domain.n):
        idx = np.unravel_index(flat, shape)
        lo = domain.lo + np.asarray(idx) * widths
        cell = IntervalBox(lo, lo + widths)
        if W.classify_cell(cell) == "inside" and \
                U.classify_cell(cell) == "inside":
            return True
    return False


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario file."""
    with open(path, "rb") as fh:
        data = fh.read()
    text = data.decode("utf-8", errors="replace")
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as err:
        raise ScenarioError(f"{path}: {err}")

    for name, tbl in doc.items():
        if not isinstance(tbl, dict):
            raise _fail(path, text, name, None,
                        "top-level keys must live inside a table")
        for key, value in tbl.items():
            if isinstance(value, dict):
                raise _fail(path, text, name, key,
                            "tables nest at most two levels")

    sys_tbl = doc.get("system")
    if not isinstance(sys_tbl, dict):
        raise ScenarioError(f"{path}: missing [system] table")
    f = sys_tbl.get("f")
    if not isinstance(f, list) or not f or \
            not all(isinstance(e, str) for e in f):
        raise _fail(path, text, "system", "f",
                    "expected a nonempty array of expression strings")
    time_domain = sys_tbl.get("time_domain", "continuous")
    if time_domain not in ("continuous", "discrete"):
        raise _fail(path, text, "system", "time_domain",
                    "must be 'continuous' or 'discrete'")
    try:
        system = SystemSpec(tuple(f), time_domain=time_domain,
                            lipschitz_hint=sys_tbl.get("lipschitz_hint"),
                            name=str(sys_tbl.get("name", "")))
    except (ExprSyntaxError, ValueError) as err:
        raise _fail(path, text, "system", "f", str(err))
    n = system.n

    notes: list = []
    pert = doc.get("perturbation", {})
    delta = delta_prime = None
    if "delta" in pert:
        delta = _number(pert["delta"], path, text, "perturbation", "delta",
                        nonnegative=True)
    if "delta_prime" in pert:
        delta_prime = _number(pert["delta_prime"], path, text,
                              "perturbation", "delta_prime",
                              nonnegative=True)
    if delta is not None and delta_prime is not None \
            and not delta_prime < delta:
        raise _fail(path, text, "perturbation", "delta_prime",
                    f"delta_prime = {delta_prime} must be smaller than "
                    f"delta = {delta}")

    domain = resolution = None
    grid = doc.get("grid", {})
    if grid:
        lo = _vector(grid.get("domain_lo"), path, text, "grid",
                     "domain_lo", n)
        hi = _vector(grid.get("domain_hi"), path, text, "grid",
                     "domain_hi", n)
        if np.any(lo >= hi):
            raise _fail(path, text, "grid", "domain_lo",
                        "domain must have lo < hi")
        domain = IntervalBox(lo, hi)
        resolution = _number(grid.get("resolution"), path, text, "grid",
                             "resolution", positive=True)

    sets = doc.get("sets", {})
    W = _parse_region(sets, "W", n, path, text)
    U = _parse_region(sets, "U", n, path, text)
    if W is not None and U is not None and not U.is_syntactically_empty:
        if _definitely_overlap(W, U, domain):
            raise _fail(path, text, "sets", None, "W and U overlap")

    solver = {"step": 0.01, "dwell": None, "horizon": None, "seed": 0,
              "trials": 1000}
    for key, raw in doc.get("solver", {}).items():
        if key == "seed":
            solver["seed"] = int(_number(raw, path, text, "solver", key,
                                         nonnegative=True))
        elif key == "trials":
            solver["trials"] = int(_number(raw, path, text, "solver", key,
                                           positive=True))
        elif key in ("step", "dwell", "horizon"):
            solver[key] = _number(raw, path, text, "solver", key,
                                  positive=True)
        else:
            notes.append(f"ignoring unknown solver key {key!r}")

    blocks = {name: dict(doc[name]) for name in _TASK_TABLES if name in doc}
    for name in doc:
        if name not in _CORE_TABLES and name not in _TASK_TABLES:
            notes.append(f"ignoring unknown table [{name}]")

    return Scenario(path=str(path), sha256=hashlib.sha256(data).hexdigest(),
                    system=system, delta=delta, delta_prime=delta_prime,
                    W=W, U=U, domain=domain, resolution=resolution,
                    solver=solver, blocks=blocks, notes=notes)
