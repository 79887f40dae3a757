"""End-to-end acceptance run.

Each test prints one PASS/FAIL line (bypassing capture) and then asserts,
so the verdict for every criterion is visible in any pytest run.  Numeric
tolerances are pinned in the assertions.
"""

import time

import numpy as np
import pytest

from robustcert.barrier import (certify, choose_level_c, construct_levelled,
                                construct_negV, replay_invariance)
from robustcert.dynamics import DisturbancePolicy, SystemSpec, simulate
from robustcert.exprlang import eval_expr, eval_interval, grad, parse
from robustcert.intervals import IntervalBox
from robustcert.lyapunov import check_ruas_empirical, verify_V
from robustcert.reachability import (check_assumption1, reach_over,
                                     reach_under)
from robustcert.regions import RegionSpec
from robustcert.steering import (construct_steering, make_steering_params,
                                 verify_membership)

D1 = IntervalBox([-1.0], [1.0])
D5 = IntervalBox([-0.5], [0.5])


def _line(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_1_linear_reach(capsys, ex1, seed_box):
    t0 = time.perf_counter()
    omega = reach_over(ex1, seed_box, 0.2, D1, 1e-3)
    elapsed = time.perf_counter() - t0
    bb = omega.member_bounding_box()
    err = max(abs(bb.lo[0] + 0.2), abs(bb.hi[0] - 0.2))
    ok = err <= 5e-3 and elapsed < 10.0
    _line(capsys, 1, ok,
          f"endpoints [{bb.lo[0]:.4f}, {bb.hi[0]:.4f}] within {err:.2e} "
          f"of +/-0.2 (tol 5e-3), {elapsed:.2f}s (< 10s)")


def test_criterion_2_separation_check(capsys, omega1, unsafe_half):
    tight = check_assumption1(omega1, RegionSpec.superlevel("abs(x1)", 0.2))
    good = check_assumption1(omega1, unsafe_half)
    far = check_assumption1(omega1, RegionSpec.superlevel("abs(x1)", 2.0))
    recorded = any("vacuous" in n for n in far.notes)
    ok = ((not tight.holds) and good.holds and good.clearance >= 0.29
          and far.holds and recorded)
    _line(capsys, 2, ok,
          f"fails at |x|>=0.2, holds at |x|>=0.5 with clearance "
          f"{good.clearance:.3f} (>= 0.29); |x|>=2 lies outside the "
          f"analysis domain and holds vacuously (noted in report)")


def test_criterion_3_quadratic_reach_and_divergence(capsys, ex2, omega2):
    bb = omega2.member_bounding_box()
    lo_ref = (1 - np.sqrt(2)) / 2
    err = max(abs(bb.lo[0] - lo_ref), abs(bb.hi[0] - 0.5))
    endpoints_ok = err <= 1e-2
    traj = simulate(ex2, [0.51], DisturbancePolicy.constant([0.25]), 150.0,
                    step=0.01)
    escape = traj.escape_time if traj.blown_up else None
    blowup_ok = traj.blown_up and escape is not None and escape < 50.0
    ok = endpoints_ok and blowup_ok
    _line(capsys, 3, ok,
          f"endpoints [{bb.lo[0]:.4f}, {bb.hi[0]:.4f}] within {err:.2e} of "
          f"({lo_ref:.4f}, 0.5); extremal escape at t={escape} is not "
          f"before t=50: from x0=0.51 the worst-case flow x' = (x-0.5)^2 "
          f"needs 1/0.01 = 100 time units to diverge, so the t<50 bound "
          f"is unattainable for these dynamics")


def test_criterion_4_steering_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst_end, worst_tube, passed = 0.0, -np.inf, 0
    trials = 200
    for i in range(trials):
        n = 1 + (i % 2)
        a = rng.uniform(0.3, 1.5, size=n)
        if n == 1:
            f = [f"-{a[0]:.3f} * x1"]
        else:
            f = [f"-{a[0]:.3f} * x1 + {rng.uniform(-0.5, 0.5):.3f} * x2",
                 f"-{a[1]:.3f} * x2"]
        sys_ = SystemSpec(f)
        K = RegionSpec.box([-1.0] * n, [1.0] * n)
        params = make_steering_params(sys_, K, 0.1, 0.2, tau=1.0,
                                      samples=2000,
                                      rng=np.random.default_rng(1000 + i))
        base = simulate(sys_, rng.uniform(-0.3, 0.3, size=n),
                        DisturbancePolicy.random(0.1, seed=i), 1.0,
                        step=0.01, rng=np.random.default_rng(i))

        def ball(center):
            v = rng.normal(size=n)
            return center + params.r * rng.uniform() ** (1 / n) \
                * v / np.linalg.norm(v)

        y0, y1 = ball(base.states[0]), ball(base.states[-1])
        res = construct_steering(sys_, base, y0, y1, params)
        start_err = float(np.linalg.norm(res.trajectory.states[0] - y0))
        end_err = float(np.linalg.norm(res.trajectory.states[-1] - y1))
        worst_end = max(worst_end, start_err, end_err)
        worst_tube = max(worst_tube, res.tube - params.r)
        passed += verify_membership(res.trajectory, sys_, 0.2).passed
    elapsed = time.perf_counter() - t0
    ok = (worst_end <= 1e-12 and worst_tube <= 1e-12
          and passed == trials and elapsed < 30.0)
    _line(capsys, 4, ok,
          f"{trials} randomized 1-D/2-D instances: worst endpoint error "
          f"{worst_end:.1e} (<= 1e-12), worst tube excess {worst_tube:.1e} "
          f"(<= 1e-12), membership {passed}/{trials}, {elapsed:.1f}s "
          f"(< 30s)")


def test_criterion_5_lyapunov_synthesis(capsys, lyap1, ex1):
    m2 = lyap1.margins["condition2"]
    chk = verify_V(lyap1, ex1, resolution=lyap1.resolution / 2)
    ok = m2 >= 0.005 and chk.ok and chk.margins["condition2"] > 0.0
    _line(capsys, 5, ok,
          f"smoothed-distance certificate at resolution "
          f"{lyap1.resolution:g}: decrease margin {m2:.4f} (>= 0.005); "
          f"half-resolution reverification keeps it at "
          f"{chk.margins['condition2']:.4f} (> 0)")


def test_criterion_6_barrier_chain(capsys, lyap1, ex1, unsafe_half):
    neg = certify(construct_negV(lyap1), ex1, conditions=("DEF4",))
    choice = choose_level_c(lyap1, unsafe_half)
    lev = construct_levelled(lyap1, choice, sys=ex1, U=unsafe_half,
                             conditions=("DEF4", "PB"))
    meta = lev.meta["PB"]
    rel = abs(meta["analytic_margin"] - meta["zero_level_margin"]) \
        / meta["analytic_margin"]
    ok = (neg.valid and neg.delta_prime == 0.1 and lev.ok
          and rel <= 0.05)
    _line(capsys, 6, ok,
          f"negated certificate passes DEF4 at delta'=0.1; level "
          f"c={float(choice):.6f} passes DEF4+PB with zero-level margin "
          f"{meta['zero_level_margin']:.6f} within {rel:.2%} of the "
          f"analytic bound {meta['analytic_margin']:.6f} (<= 5%)")


def test_criterion_7_discrete_chain(capsys, lyapd, exd):
    cert = certify(construct_negV(lyapd), exd,
                   conditions=("DEF10", "BARRIERDT"))
    rep = replay_invariance(cert, exd, trials=1000, seed=1)
    ok = cert.ok and cert.valid and rep.exits == 0
    _line(capsys, 7, ok,
          f"Euler-map certificate passes DEF10+BARRIERDT (margins "
          f"{cert.margins}); replay of {rep.trials} trajectories over "
          f"horizon {rep.horizon:g}: {rep.exits} exits from the "
          f"nonnegative set (min value {rep.min_value:.1e})")


def test_criterion_8_empirical_set_stability(capsys, ex1, ex2, omega1,
                                             omega2):
    rep = check_ruas_empirical(ex1, omega1, 0.1, [0.05, 0.1, 0.2],
                               trials=1000, seed=0)
    deltas = [row[1] for row in rep.stability_table]
    monotone = deltas == sorted(deltas)
    d_small = deltas[0]
    diverging = check_ruas_empirical(ex2, omega2, 0.25, [0.05, 0.1],
                                     trials=200, seed=0)
    ok = (rep.ok and monotone and d_small >= 0.04
          and not diverging.ok and diverging.counterexample is not None
          and diverging.counterexample.blown_up)
    _line(capsys, 8, ok,
          f"monotone table delta_eps={['%.3f' % d for d in deltas]} over "
          f"{rep.trials} trials with delta_0.05={d_small:.3f} (>= 0.04); "
          f"equal budgets delta'=delta=0.25 on the quadratic system yield "
          f"a diverging counterexample")


def test_criterion_9_property_bundle(capsys, ex1, seed_box):
    t0 = time.perf_counter()
    violations = []
    rng = np.random.default_rng(9)

    # forward AD against central differences
    exprs = ["x1^3 - 2 * x1 * x2 + x2^2", "exp(-x1^2) + x2 / (1 + x1^2)",
             "sqrt(1 + x1^2 + x2^2)", "smoothplus(x1 - x2, 50)"]
    h = 1e-6
    for src in exprs:
        e = parse(src)
        for _ in range(5):
            x = rng.uniform(-1.5, 1.5, size=2)
            g = grad(e, x)
            for i in range(2):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd = (eval_expr(e, xp) - eval_expr(e, xm)) / (2 * h)
                if abs(g[i] - fd) > 1e-5 * (1 + abs(fd)):
                    violations.append(f"AD {src}")

    # interval enclosure of pointwise evaluation
    for src in exprs + ["abs(x1 - x2)", "min(x1, x2^2)"]:
        e = parse(src)
        for _ in range(5):
            lo = rng.uniform(-1.5, 0.5, size=2)
            box = IntervalBox(lo, lo + rng.uniform(0.01, 1.0, size=2))
            iv = eval_interval(e, box)
            vals = eval_expr(e, box.sample(rng, 100))
            if iv.lo > vals.min() + 1e-10 or iv.hi < vals.max() - 1e-10:
                violations.append(f"interval {src}")

    # reach-set order structure: monotone, fixpoint, sandwich
    small = reach_over(ex1, seed_box, 0.1, D1, 5e-3)
    big = reach_over(ex1, seed_box, 0.2, D1, 5e-3)
    if not big.covers(small):
        violations.append("reach monotone in delta")
    if not reach_over(ex1, big, 0.2, D1, 5e-3).same_members(big):
        violations.append("reach fixpoint")
    under = reach_under(ex1, seed_box, 0.2, D1, 5e-3, budget=50,
                        horizon=10.0, seed=0)
    if not big.covers(under):
        violations.append("under/over sandwich")

    # closed-form worst-case disturbance is a true minimizer
    for _ in range(50):
        x = rng.uniform(-0.4, 0.4)
        g = -2.0 * x
        closed = g * -x - 0.25 * abs(g)
        sampled = np.min(g * (-x + rng.uniform(-0.25, 0.25, size=2000)))
        if sampled < closed - 1e-12:
            violations.append("worst-case disturbance")
            break

    elapsed = time.perf_counter() - t0
    ok = not violations
    _line(capsys, 9, ok,
          f"AD/interval/reach-order/worst-case-disturbance properties: "
          f"{len(violations)} violations ({elapsed:.1f}s)"
          + (f"; failing: {sorted(set(violations))}" if violations else ""))
