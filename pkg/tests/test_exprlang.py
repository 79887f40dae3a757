"""Expression language: parsing, evaluation, forward AD, interval enclosure."""

import numpy as np
import pytest

from robustcert.exprlang import (DomainError, ExprSyntaxError,
                                 NonDifferentiableError, eval_expr,
                                 eval_interval, grad, is_differentiable,
                                 max_var_index, parse, to_string)
from robustcert.intervals import IntervalBox

# differentiable everywhere on the sample boxes used below
SMOOTH = [
    "x1^3 - 2 * x1 * x2 + x2^2",
    "exp(-x1^2) + x2 / (1 + x1^2)",
    "sqrt(1 + x1^2 + x2^2)",
    "smoothplus(x1 - x2, 50)",
    "-(x1 + 2) * x2^2 / 3",
    "0.5 * x1 - 1.25",
]
# interval evaluation must also cover the nonsmooth constructs
NONSMOOTH = ["abs(x1 - x2)", "min(x1, x2^2)", "max(abs(x1), 0.3)"]


def test_eval_oracles():
    assert eval_expr(parse("x1^2 + 2 * x2"), [3.0, 4.0]) == 17.0
    assert eval_expr(parse("2 + 3 * 4^2"), [0.0]) == 50.0
    # unary minus binds tighter than ^, so -x1^2 means (-x1)^2
    assert eval_expr(parse("-x1^2"), [3.0]) == 9.0
    assert eval_expr(parse("-(x1^2)"), [3.0]) == -9.0
    assert eval_expr(parse("(2 + 3) * 4"), [0.0]) == 20.0
    assert eval_expr(parse("abs(-2.5)"), [0.0]) == 2.5


def test_batch_eval():
    e = parse("x1^2 + x2")
    out = eval_expr(e, np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.allclose(out, [3.0, 13.0])


def test_roundtrip_through_to_string():
    rng = np.random.default_rng(0)
    for src in SMOOTH + NONSMOOTH:
        e = parse(src)
        back = parse(to_string(e))
        for _ in range(10):
            x = rng.uniform(-1.5, 1.5, size=2)
            assert eval_expr(back, x) == pytest.approx(eval_expr(e, x),
                                                       rel=1e-14, abs=1e-14)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for src in SMOOTH:
        e = parse(src)
        for _ in range(20):
            x = rng.uniform(-1.5, 1.5, size=2)
            g = grad(e, x)
            for i in range(2):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd = (eval_expr(e, xp) - eval_expr(e, xm)) / (2 * h)
                assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_nonsmooth_rejected_by_ad():
    for src in NONSMOOTH:
        e = parse(src)
        assert not is_differentiable(e)
        with pytest.raises(NonDifferentiableError):
            grad(e, [0.3, 0.3])
    assert is_differentiable(parse(SMOOTH[0]))


def test_interval_encloses_samples():
    rng = np.random.default_rng(2)
    for src in SMOOTH + NONSMOOTH:
        e = parse(src)
        for _ in range(10):
            lo = rng.uniform(-1.5, 0.5, size=2)
            box = IntervalBox(lo, lo + rng.uniform(0.01, 1.0, size=2))
            iv = eval_interval(e, box)
            vals = eval_expr(e, box.sample(rng, 100))
            assert iv.lo <= vals.min() + 1e-10
            assert iv.hi >= vals.max() - 1e-10


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_expr(parse("sqrt(x1)"), [-1.0])
    with pytest.raises(DomainError):
        eval_interval(parse("1 / x1"), IntervalBox([-1.0], [1.0]))
    with pytest.raises(DomainError):
        eval_expr(parse("1 / x1"), [0.0])


def test_syntax_errors():
    for bad in ["x1 +", "(x1", "x1 ** 2", "frob(x1)", ""]:
        with pytest.raises(ExprSyntaxError):
            parse(bad)


def test_max_var_index():
    # 0-based: x3 refers to component index 2; constants use -1
    assert max_var_index(parse("x1 + x3^2")) == 2
    assert max_var_index(parse("1.5")) == -1
