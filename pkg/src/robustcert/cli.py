"""Command line front end: scenario-file driven runs with JSON reports.

Every command reads one scenario file, writes ``report.json`` plus CSV
artifacts into the output directory, and exits 0 when a verdict was
reached (even a negative one such as "unsafe"), 2 when the run was
inconclusive (grid escape, synthesis failure, infeasible steering bound),
and 1 on input errors.  Identical scenario and seed produce byte-identical
reports except for the timestamp field.
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .scenario import Scenario, ScenarioError, load_scenario
from .intervals import IntervalBox
from .regions import RegionSpec
from .dynamics import DisturbancePolicy, simulate
from .reachability import (reach_over, reach_under, check_safety,
                           check_assumption1)
from .lyapunov import SynthesisError, check_ruas_empirical, synthesize_V, \
    verify_V
from .barrier import (certify, construct_negV, construct_levelled,
                      construct_reciprocal, choose_level_c, replay_invariance)
from .steering import make_steering_params, construct_steering, \
    verify_membership

COMMANDS = ("simulate", "reach", "check-safety", "check-assumption",
            "check-ruas", "synthesize-lyapunov", "synthesize-barrier",
            "certify-barrier", "steer")


class _Inconclusive(RuntimeError):
    """Verdict could not be reached; carries report data for exit 2."""

    def __init__(self, verdict: str, data: dict):
        super().__init__(verdict)
        self.verdict = verdict
        self.data = data


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; those are input errors here."""

    def error(self, message):
        self.print_usage(_sys.stderr)
        _sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _require(value, what: str):
    if value is None:
        raise ScenarioError(f"scenario is missing {what}")
    return value


def _write(out: Path, name: str, text: str) -> str:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    return name


class _Run:
    """Shared context for one command invocation."""

    def __init__(self, sc: Scenario, args):
        self.sc = sc
        self.args = args
        self.out = Path(args.out)
        self.seed = args.seed if args.seed is not None \
            else sc.solver["seed"]
        self.resolution = args.resolution if args.resolution is not None \
            else sc.resolution
        self.artifacts: list = []
        self.notes: list = list(sc.notes)

    def rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def save(self, name: str, text: str):
        self.artifacts.append(_write(self.out, name, text))

    def reach_set(self, allow_escape: bool = False):
        sc = self.sc
        W = _require(sc.W, "[sets] W")
        delta = _require(sc.delta, "[perturbation] delta")
        domain = _require(sc.domain, "[grid] domain")
        resolution = _require(self.resolution, "[grid] resolution")
        kwargs = {}
        if sc.solver["step"]:
            kwargs["step"] = sc.solver["step"]
        if sc.solver["dwell"]:
            kwargs["dwell"] = sc.solver["dwell"]
        omega = reach_over(sc.system, W, delta, domain, resolution, **kwargs)
        if omega.num_members == 0:
            raise ValueError("W lies outside the grid domain")
        self.save("reach_over.csv", omega.to_csv())
        if omega.escaped and not allow_escape:
            raise _Inconclusive("escaped",
                                {"members": omega.num_members,
                                 "escaped": True})
        return omega

    def report(self, command: str, verdict: str, data: dict) -> dict:
        payload = {
            "schema": 1,
            "command": command,
            "tool": {"name": "robustcert", "version": __version__},
            "scenario": {"path": self.sc.path, "sha256": self.sc.sha256},
            "provenance": {"seed": int(self.seed),
                           "resolution": self.resolution,
                           "threads": int(self.args.threads)},
            "verdict": verdict,
            "data": _jsonable(data),
            "artifacts": sorted(self.artifacts),
            "notes": list(self.notes),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        _write(self.out, "report.json",
               json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return payload


def _policy_from(block: dict, fallback_delta: float, seed: int
                 ) -> DisturbancePolicy:
    kind = block.get("policy", "piecewise_constant_random")
    delta = float(block.get("policy_delta", fallback_delta or 0.0))
    if kind in ("random", "piecewise_constant_random"):
        return DisturbancePolicy.random(delta, seed=seed)
    if kind == "zero":
        return DisturbancePolicy.zero()
    if kind == "constant":
        return DisturbancePolicy.constant(block["policy_vector"], delta)
    if kind == "extremal":
        return DisturbancePolicy.extremal(
            delta, direction=block.get("policy_direction"),
            align_gradient_of=block.get("policy_align"))
    raise ScenarioError(f"unknown disturbance policy {kind!r}")


# ---------------------------------------------------------------------------
# command handlers: return (verdict, data, exit_code)


def _cmd_simulate(run: _Run):
    sc = run.sc
    blk = sc.block("simulate")
    x0 = np.asarray(_require(blk.get("x0"), "[simulate] x0"), dtype=float)
    horizon = float(blk.get("horizon") or sc.solver["horizon"] or 10.0)
    policy = _policy_from(blk, sc.delta, run.seed)
    traj = simulate(sc.system, x0, policy, horizon,
                    step=sc.solver["step"], dwell=sc.solver["dwell"],
                    rng=run.rng())
    run.save("trajectory.csv", traj.to_csv())
    data = {"blown_up": traj.blown_up, "escape_time": traj.escape_time,
            "final_state": traj.states[-1], "samples": len(traj.times),
            "policy": policy.kind, "delta": policy.delta}
    return ("diverged" if traj.blown_up else "completed"), data, 0


def _cmd_reach(run: _Run):
    omega = run.reach_set(allow_escape=True)
    blk = run.sc.block("reach")
    data = {"members": omega.num_members, "escaped": omega.escaped,
            "delta": run.sc.delta}
    bb = omega.member_bounding_box()
    if bb is not None:
        data["bounding_lo"] = bb.lo
        data["bounding_hi"] = bb.hi
    if blk.get("under_budget"):
        under = reach_under(run.sc.system, run.sc.W, run.sc.delta,
                            run.sc.domain, run.resolution,
                            budget=int(blk["under_budget"]),
                            horizon=float(blk.get("horizon", 20.0)),
                            step=run.sc.solver["step"], seed=run.seed)
        run.save("reach_under.csv", under.to_csv())
        data["under_members"] = under.num_members
        data["sandwich"] = omega.covers(under)
    if omega.escaped:
        raise _Inconclusive("escaped", data)
    return "bounded", data, 0


def _cmd_check_safety(run: _Run):
    U = _require(run.sc.U, "[sets] U")
    omega = run.reach_set()
    rep = check_safety(omega, U)
    data = rep.to_dict()
    data["members"] = omega.num_members
    if rep.verdict == "unknown":
        raise _Inconclusive("unknown", data)
    return rep.verdict, data, 0


def _cmd_check_assumption(run: _Run):
    U = _require(run.sc.U, "[sets] U")
    omega = run.reach_set()
    rep = check_assumption1(omega, U)
    data = rep.to_dict()
    return ("holds" if rep.holds else "fails"), data, 0


def _cmd_check_ruas(run: _Run):
    sc = run.sc
    blk = sc.block("ruas")
    delta_prime = _require(sc.delta_prime, "[perturbation] delta_prime")
    eps = [float(e) for e in blk.get("epsilons", (0.05, 0.1, 0.2))]
    trials = int(blk.get("trials", sc.solver["trials"]))
    omega = run.reach_set()
    rep = check_ruas_empirical(
        sc.system, omega, delta_prime, eps, trials=trials,
        horizon=blk.get("horizon") or sc.solver["horizon"],
        step=sc.solver["step"], dwell=sc.solver["dwell"], seed=run.seed)
    rows = ["epsilon,delta_epsilon,worst_excursion"]
    rows += [f"{e},{d},{w}" for e, d, w in rep.stability_table]
    run.save("ruas_stability.csv", "\n".join(rows) + "\n")
    rows = ["epsilon,time_to_enter"]
    rows += [f"{e},{t}" for e, t in rep.attraction_table]
    run.save("ruas_attraction.csv", "\n".join(rows) + "\n")
    if rep.counterexample is not None:
        run.save("counterexample.csv", rep.counterexample.to_csv())
    data = json.loads(rep.to_json())
    return ("consistent" if rep.ok else "counterexample"), data, 0


def _synthesis_inputs(run: _Run):
    sc = run.sc
    blk = sc.block("synthesis")
    omega = run.reach_set()
    if "domain_lo" in blk or "domain_hi" in blk:
        D = IntervalBox(blk["domain_lo"], blk["domain_hi"])
    else:
        D = sc.domain
    delta_prime = _require(sc.delta_prime, "[perturbation] delta_prime")
    return omega, D, delta_prime, blk


def _cmd_synthesize_lyapunov(run: _Run):
    omega, D, delta_prime, blk = _synthesis_inputs(run)
    try:
        cert = synthesize_V(run.sc.system, omega, D, delta_prime,
                            basis=blk.get("basis", "smoothed_distance"),
                            kappa=float(blk.get("kappa", 200.0)),
                            degree=int(blk.get("degree", 4)),
                            resolution=blk.get("resolution"))
    except SynthesisError as err:
        raise _Inconclusive("synthesis-failed",
                            {"error": str(err), "margins": err.margins})
    run.save("certificate.json", cert.to_json() + "\n")
    data = {"margins": cert.margins, "band": cert.band,
            "basis": cert.basis, "resolution": cert.resolution,
            "alpha1": cert.alpha1.to_dict(), "alpha2": cert.alpha2.to_dict(),
            "alpha3": cert.alpha3.to_dict()}
    if blk.get("verify_resolution"):
        chk = verify_V(cert, run.sc.system,
                       resolution=float(blk["verify_resolution"]))
        data["reverify"] = {"ok": chk.ok, "margins": chk.margins}
    return "synthesized", data, 0


def _cmd_synthesize_barrier(run: _Run):
    omega, D, delta_prime, blk = _synthesis_inputs(run)
    bblk = run.sc.block("barrier")
    construction = bblk.get("construction", "negV")
    try:
        cert = synthesize_V(run.sc.system, omega, D, delta_prime,
                            basis=blk.get("basis", "smoothed_distance"),
                            kappa=float(blk.get("kappa", 200.0)),
                            degree=int(blk.get("degree", 4)),
                            resolution=blk.get("resolution"))
    except SynthesisError as err:
        raise _Inconclusive("synthesis-failed",
                            {"error": str(err), "margins": err.margins})
    discrete = run.sc.system.time_domain == "discrete"
    if construction == "negV":
        bc = construct_negV(cert)
        default_conds = ("DEF10",) if discrete else ("DEF4",)
    elif construction in ("levelled", "reciprocal"):
        if bblk.get("level_c") is not None:
            c = float(bblk["level_c"])
        else:
            try:
                c = choose_level_c(cert, run.sc.U)
            except ValueError as err:
                raise _Inconclusive("no-admissible-level",
                                    {"error": str(err)})
        if construction == "levelled":
            bc = construct_levelled(cert, c, U=run.sc.U)
            default_conds = ("DEF10", "DTB0", "BARRIERDT") if discrete \
                else ("DEF4", "RATSCHAN_STRICT", "BC1", "PB")
        else:
            bc = construct_reciprocal(cert, c)
            default_conds = ("DTRB",) if discrete else ("RB",)
    else:
        raise ScenarioError(
            f"unknown barrier construction {construction!r}")
    conds = tuple(bblk.get("conditions", default_conds))
    res = certify(bc, run.sc.system, U=run.sc.U, conditions=conds)
    run.save("barrier.json", res.to_json() + "\n")
    data = {"construction": construction, "ok": res.ok, "valid": res.valid,
            "margins": res.margins, "failures": res.failures,
            "conditions": list(conds), "level_c": res.level_c}
    if bblk.get("replay_trials"):
        rep = replay_invariance(res, run.sc.system,
                                trials=int(bblk["replay_trials"]),
                                seed=run.seed)
        data["replay"] = json.loads(rep.to_json())
    return ("certified" if res.ok else "conditions-failed"), data, 0


def _cmd_certify_barrier(run: _Run):
    sc = run.sc
    blk = sc.block("barrier")
    B = _require(blk.get("B"), "[barrier] B")
    conds = blk.get("conditions")
    res = certify(B, sc.system, W=sc.W, U=sc.U,
                  delta_prime=sc.delta_prime,
                  domain=_require(sc.domain, "[grid] domain"),
                  resolution=_require(run.resolution, "[grid] resolution"),
                  conditions=tuple(conds) if conds else None,
                  level_c=blk.get("level_c"))
    run.save("barrier.json", res.to_json() + "\n")
    data = {"ok": res.ok, "valid": res.valid, "margins": res.margins,
            "failures": res.failures,
            "conditions": sorted(set(res.verified_conditions)
                                 | set(res.failures))}
    return ("certified" if res.ok else "violated"), data, 0


def _cmd_steer(run: _Run):
    sc = run.sc
    blk = sc.block("steering")
    K = _require(sc.W, "[sets] W (the steering region)")
    delta = _require(sc.delta, "[perturbation] delta")
    delta_prime = _require(sc.delta_prime, "[perturbation] delta_prime")
    x0 = np.asarray(_require(blk.get("x0"), "[steering] x0"), dtype=float)
    tau = float(blk.get("tau", 1.0))
    try:
        params = make_steering_params(
            sc.system, K, delta_prime, delta, tau=tau,
            samples=int(blk.get("samples", 10000)), rng=run.rng(7))
    except ValueError as err:
        raise _Inconclusive("no-admissible-radius", {"error": str(err)})
    horizon = tau if sc.system.time_domain == "continuous" \
        else float(blk.get("steps", 4))
    base = simulate(sc.system, x0,
                    DisturbancePolicy.random(delta_prime, seed=run.seed),
                    horizon, step=sc.solver["step"],
                    dwell=sc.solver["dwell"], rng=run.rng(1))
    rng = run.rng(2)

    def _endpoint(key, anchor):
        if blk.get(key) is not None:
            return np.asarray(blk[key], dtype=float)
        off = rng.normal(size=anchor.size)
        off *= params.r * rng.uniform() ** (1.0 / anchor.size) \
            / max(np.linalg.norm(off), 1e-30)
        return anchor + off

    y0 = _endpoint("y0", base.states[0])
    y1 = _endpoint("y1", base.states[-1])
    result = construct_steering(sc.system, base, y0, y1, params)
    mem = verify_membership(result.trajectory, sc.system, delta)
    run.save("steering_trajectory.csv", result.trajectory.to_csv())
    rows = ["t,residual"]
    rows += [f"{t},{r}" for t, r in
             zip(result.trajectory.times[1:], result.residuals)]
    run.save("steering_residuals.csv", "\n".join(rows) + "\n")
    data = {"r": params.r, "tube": result.tube,
            "max_residual": result.max_residual,
            "endpoint_error": float(np.linalg.norm(
                result.trajectory.states[-1] - y1)),
            "passed": mem.passed}
    return ("steered" if mem.passed else "membership-failed"), data, 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "reach": _cmd_reach,
    "check-safety": _cmd_check_safety,
    "check-assumption": _cmd_check_assumption,
    "check-ruas": _cmd_check_ruas,
    "synthesize-lyapunov": _cmd_synthesize_lyapunov,
    "synthesize-barrier": _cmd_synthesize_barrier,
    "certify-barrier": _cmd_certify_barrier,
    "steer": _cmd_steer,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="robustcert",
                     description="Scenario-driven robust safety runs")
    parser.add_argument("--version", action="version",
                        version=f"robustcert {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} task")
        p.add_argument("--scenario", required=True,
                       help="scenario file (TOML)")
        p.add_argument("--out", default=".",
                       help="output directory for report.json and CSVs")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--resolution", type=float, default=None,
                       help="override the grid resolution")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (recorded; runs are one "
                            "process)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(_sys.stderr)
        return 1
    try:
        sc = load_scenario(args.scenario)
    except FileNotFoundError:
        _sys.stderr.write(f"robustcert: scenario not found: "
                          f"{args.scenario}\n")
        return 1
    except ScenarioError as err:
        _sys.stderr.write(f"robustcert: {err}\n")
        return 1

    run = _Run(sc, args)
    try:
        verdict, data, code = _HANDLERS[args.command](run)
    except _Inconclusive as stop:
        run.report(args.command, stop.verdict, stop.data)
        return 2
    except (ScenarioError, ValueError) as err:
        _sys.stderr.write(f"robustcert: {err}\n")
        return 1
    run.report(args.command, verdict, data)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
