"""Lyapunov synthesis and empirical set-stability checks."""

import json

import numpy as np
import pytest

from robustcert.dynamics import SystemSpec
from robustcert.intervals import IntervalBox
from robustcert.lyapunov import (ClassKFn, SynthesisError,
                                 check_ruas_empirical, synthesize_V,
                                 verify_V)

D5 = IntervalBox([-0.5], [0.5])


def test_class_k_basics():
    k = ClassKFn(a=2.0, p=2.0, s_max=1.0)
    assert k(0.0) == 0.0
    assert k(0.5) == pytest.approx(0.5)
    assert k.inverse(k(0.7)) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        k(1.5)
    with pytest.raises(ValueError):
        ClassKFn(a=-1.0, p=1.0, s_max=1.0)
    d = k.to_dict()
    assert d["a"] == 2.0 and d["p"] == 2.0


def test_synthesis_margins_oracle(lyap1):
    # frozen from a reference run at resolution 1e-3
    assert lyap1.margins["condition1_lower"] == 0.0
    assert 0.0 < lyap1.margins["condition1_upper"] < 1e-4
    assert lyap1.margins["condition2"] == pytest.approx(0.013994069669,
                                                        rel=1e-6)
    assert lyap1.resolution == pytest.approx(1e-3)
    assert lyap1.margins["condition2"] >= 0.005


def test_certificate_sandwich_property(lyap1):
    # alpha1(dist) <= V <= alpha2(dist) pointwise outside the target set
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, size=(200, 1))
    A = lyap1.A
    centers = A.member_centers()
    for p in pts:
        dist = float(np.min(np.abs(centers[:, 0] - p[0])))
        dist = max(0.0, dist - float(A.half_diag))
        v = lyap1.candidate.value(p)
        assert v >= lyap1.alpha1(min(dist, lyap1.alpha1.s_max)) - 1e-9
        hi_arg = min(dist + 2 * float(A.half_diag), lyap1.alpha2.s_max)
        assert v <= lyap1.alpha2(hi_arg) + 1e-9


def test_verification_at_double_resolution(lyap1, ex1):
    chk = verify_V(lyap1, ex1, resolution=lyap1.resolution / 2)
    assert chk.ok
    assert all(m >= 0.0 for m in chk.margins.values())
    assert chk.margins["condition2"] > 0.005


def test_verification_catches_wrong_dynamics(lyap1):
    chk = verify_V(lyap1, SystemSpec(["x1"]))
    assert not chk.ok
    assert chk.failed_condition == "condition2"
    assert chk.failed_point is not None


def test_synthesis_error_on_unstable_system(ex1, omega1_half):
    with pytest.raises(SynthesisError) as exc:
        synthesize_V(SystemSpec(["x1"]), omega1_half, D5, 0.1)
    assert exc.value.margins.get("condition2", 0.0) < 0.0


def test_synthesis_preconditions(ex1, omega1_half):
    with pytest.raises(ValueError):
        synthesize_V(ex1, omega1_half, D5, 0.2)  # delta_prime not < delta
    with pytest.raises(ValueError):
        # cell set must lie strictly inside D
        synthesize_V(ex1, omega1_half, IntervalBox([-0.15], [0.15]), 0.1)


def test_certificate_serialization(lyap1):
    doc = json.loads(lyap1.to_json())
    assert doc["schema"] == 1
    assert doc["margins"]["condition2"] == pytest.approx(
        lyap1.margins["condition2"])


def test_ruas_table_monotone(ex1, omega1):
    rep = check_ruas_empirical(ex1, omega1, 0.1, [0.05, 0.1, 0.2],
                               trials=150, seed=0)
    assert rep.ok
    deltas = [row[1] for row in rep.stability_table]
    assert deltas == sorted(deltas)
    assert all(d > 0 for d in deltas)
    # excursions actually observed stay within each epsilon
    assert all(w <= e + 1e-9 for e, _, w in rep.stability_table)
    assert all(t is not None for _, t in rep.attraction_table)


def test_ruas_divergence_counterexample(ex2, omega2):
    rep = check_ruas_empirical(ex2, omega2, 0.25, [0.05, 0.1], trials=200,
                               seed=0)
    assert not rep.ok
    assert rep.counterexample is not None
    assert rep.counterexample.blown_up
    doc = json.loads(rep.to_json())
    assert doc["counterexample"] is not None


def test_discrete_synthesis(lyapd, exd):
    assert lyapd.time_domain == "discrete"
    assert all(m >= 0.0 for m in lyapd.margins.values())
    chk = verify_V(lyapd, exd)
    assert chk.ok
