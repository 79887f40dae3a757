"""A small expression language for dynamics and certificate candidates.

Grammar (whitespace insensitive)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := base ('^' integer)?
    base    := number | var | '(' expr ')' | func '(' expr (',' expr)? ')' | '-' base
    var     := 'x' digits              (1-based: x1 ... xn)
    func    := 'exp' | 'sqrt' | 'abs' | 'min' | 'max' | 'smoothplus'

Powers are restricted to integer exponents.  smoothplus(u, k) is the softplus
log(1 + exp(k*u)) / k with sharpness k > 0 (default 1); it is the one smooth
surrogate for max(u, 0) that the differentiation rules accept.

Evaluation is numpy-vectorised: `eval_expr(e, x)` accepts x of shape (..., n)
and returns shape (...).  `grad` is exact forward-mode differentiation and
rejects abs/min/max.  `eval_interval` is the natural interval extension using
the same float primitives as point evaluation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import expit

from .intervals import Interval, IntervalBox, IntervalDomainError


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.message = message
        self.line = line
        self.col = col


class DomainError(ValueError):
    """Evaluation left the mathematical domain (sqrt of negative, division by zero)."""


class NonDifferentiableError(ValueError):
    """Differentiation requested through abs, min, or max."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Union[Num, Var, Neg, Bin, Pow, Call]

_FUNCS = {"exp": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2, "smoothplus": (1, 2)}


def max_var_index(e: Expr) -> int:
    """Largest 0-based variable index used, or -1 for constant expressions."""
    if isinstance(e, Num):
        return -1
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Neg):
        return max_var_index(e.arg)
    if isinstance(e, Bin):
        return max(max_var_index(e.left), max_var_index(e.right))
    if isinstance(e, Pow):
        return max_var_index(e.base)
    return max((max_var_index(a) for a in e.args), default=-1)


def is_differentiable(e: Expr) -> bool:
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, Neg):
        return is_differentiable(e.arg)
    if isinstance(e, Bin):
        return is_differentiable(e.left) and is_differentiable(e.right)
    if isinstance(e, Pow):
        return is_differentiable(e.base)
    if e.fn in ("abs", "min", "max"):
        return False
    return all(is_differentiable(a) for a in e.args)


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r"|(?P<ws>\s+)"
    r"|(?P<bad>.)"
)


@dataclass
class _Token:
    kind: str  # num | ident | op | eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        tok = m.group()
        if kind == "ws":
            nl = tok.count("\n")
            if nl:
                line += nl
                col = len(tok) - tok.rfind("\n")
            else:
                col += len(tok)
            continue
        if kind == "bad":
            raise ExprSyntaxError(f"unexpected character {tok!r}", line, col)
        tokens.append(_Token(kind, tok, line, col))
        col += len(tok)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            found = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise ExprSyntaxError(f"expected {op!r}, found {found}", tok.line, tok.col)
        return self.advance()

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = Bin(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        node = self.parse_base()
        if self.at_op("^"):
            self.advance()
            node = Pow(node, self.parse_int_exponent())
        return node

    def parse_int_exponent(self) -> int:
        sign = 1
        if self.at_op("-"):
            self.advance()
            sign = -1
        tok = self.peek()
        if tok.kind != "num":
            found = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise ExprSyntaxError(f"expected integer exponent, found {found}",
                                  tok.line, tok.col)
        if not tok.text.isdigit():
            raise ExprSyntaxError(
                f"exponent must be an integer literal, got {tok.text!r}",
                tok.line, tok.col)
        self.advance()
        return sign * int(tok.text)

    def parse_base(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.parse_base())
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            return self.parse_ident()
        found = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise ExprSyntaxError(f"expected expression, found {found}", tok.line, tok.col)

    def parse_ident(self) -> Expr:
        tok = self.advance()
        name = tok.text
        var_m = re.fullmatch(r"x(\d+)", name)
        if var_m:
            idx = int(var_m.group(1))
            if idx < 1:
                raise ExprSyntaxError("variable indices start at x1", tok.line, tok.col)
            return Var(idx - 1)
        if name not in _FUNCS:
            raise ExprSyntaxError(f"unknown identifier {name!r}", tok.line, tok.col)
        self.expect_op("(")
        args = [self.parse_expr()]
        while self.at_op(","):
            self.advance()
            args.append(self.parse_expr())
        self.expect_op(")")
        arity = _FUNCS[name]
        allowed = arity if isinstance(arity, tuple) else (arity,)
        if len(args) not in allowed:
            want = " or ".join(str(a) for a in allowed)
            raise ExprSyntaxError(
                f"{name} expects {want} argument(s), got {len(args)}",
                tok.line, tok.col)
        if name == "smoothplus":
            kappa = args[1] if len(args) == 2 else Num(1.0)
            if not isinstance(kappa, Num) or kappa.value <= 0:
                raise ExprSyntaxError(
                    "smoothplus sharpness must be a positive numeric constant",
                    tok.line, tok.col)
            args = [args[0], kappa]
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse an expression, raising ExprSyntaxError with line/column on failure."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.line, tok.col)
    return node


# ---------------------------------------------------------------------------
# Printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC_ADD if e.op in "+-" else _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Num) and e.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_string(e: Expr) -> str:
    """Render an AST so that parse(to_string(e)) == e."""

    def wrap(child: Expr, minimum: int) -> str:
        s = to_string(child)
        return f"({s})" if _prec(child) < minimum else s

    if isinstance(e, Num):
        if e.value < 0:
            return f"(-{_fmt_num(-e.value)})"
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Neg):
        # '-' binds tighter than '^' in the grammar, so -(u^k) needs parens
        if isinstance(e.arg, (Num, Var, Call)) and not (isinstance(e.arg, Num) and e.arg.value < 0):
            return f"-{to_string(e.arg)}"
        return f"-({to_string(e.arg)})"
    if isinstance(e, Bin):
        left = wrap(e.left, _prec(e))
        # grammar is left-associative: a same-precedence right child needs parens
        right = wrap(e.right, _prec(e) + 1)
        return f"{left} {e.op} {right}"
    if isinstance(e, Pow):
        base = wrap(e.base, _PREC_ATOM)
        return f"{base}^{e.exponent}"
    args = ", ".join(to_string(a) for a in e.args)
    return f"{e.fn}({args})"


# ---------------------------------------------------------------------------
# Evaluation

def _check_finite_div(den) -> None:
    if np.any(den == 0.0):
        raise DomainError("division by zero")


def eval_expr(e: Expr, x) -> np.ndarray:
    """Evaluate at points x of shape (..., n); returns shape (...)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("evaluation point must have shape (..., n)")
    out = _eval(e, x)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()


def _eval(e: Expr, x: np.ndarray):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.index >= x.shape[-1]:
            raise DomainError(
                f"expression uses x{e.index + 1} but points have dimension {x.shape[-1]}")
        return x[..., e.index]
    if isinstance(e, Neg):
        return -_eval(e.arg, x)
    if isinstance(e, Bin):
        a, b = _eval(e.left, x), _eval(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        _check_finite_div(b)
        return a / b
    if isinstance(e, Pow):
        a = _eval(e.base, x)
        if e.exponent < 0:
            _check_finite_div(a)
        return a ** float(e.exponent) if e.exponent < 0 else a ** e.exponent
    a = _eval(e.args[0], x)
    if e.fn == "exp":
        return np.exp(a)
    if e.fn == "sqrt":
        if np.any(a < 0.0):
            raise DomainError("sqrt of negative value")
        return np.sqrt(a)
    if e.fn == "abs":
        return np.abs(a)
    if e.fn == "min":
        return np.minimum(a, _eval(e.args[1], x))
    if e.fn == "max":
        return np.maximum(a, _eval(e.args[1], x))
    # smoothplus: log(1 + exp(k u)) / k, stable via logaddexp
    kappa = e.args[1].value
    return np.logaddexp(0.0, kappa * a) / kappa


def grad(e: Expr, x) -> np.ndarray:
    """Forward-mode gradient at x of shape (..., n); returns shape (..., n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    _, g = _eval_grad(e, x, n)
    if np.isscalar(g) or np.asarray(g).ndim == 0:
        g = np.zeros(n)
    return np.broadcast_to(np.asarray(g, dtype=float), x.shape[:-1] + (n,)).copy()


def _basis(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def _eval_grad(e: Expr, x: np.ndarray, n: int):
    if isinstance(e, Num):
        return e.value, 0.0
    if isinstance(e, Var):
        return x[..., e.index], _basis(e.index, n)
    if isinstance(e, Neg):
        v, g = _eval_grad(e.arg, x, n)
        return -v, -g
    if isinstance(e, Bin):
        va, ga = _eval_grad(e.left, x, n)
        vb, gb = _eval_grad(e.right, x, n)
        if e.op == "+":
            return va + vb, ga + gb
        if e.op == "-":
            return va - vb, ga - gb
        if e.op == "*":
            return va * vb, _sc(va) * gb + _sc(vb) * ga
        _check_finite_div(vb)
        return va / vb, (ga * _sc(vb) - _sc(va) * gb) / _sc(vb * vb)
    if isinstance(e, Pow):
        v, g = _eval_grad(e.base, x, n)
        k = e.exponent
        if k == 0:
            return np.ones_like(np.asarray(v, dtype=float)) if np.ndim(v) else 1.0, 0.0
        if k < 0:
            _check_finite_div(v)
        val = v ** float(k) if k < 0 else v ** k
        dval = k * (v ** float(k - 1) if k - 1 < 0 else v ** (k - 1))
        return val, _sc(dval) * g
    if e.fn in ("abs", "min", "max"):
        raise NonDifferentiableError(f"{e.fn} is not differentiable")
    v, g = _eval_grad(e.args[0], x, n)
    if e.fn == "exp":
        val = np.exp(v)
        return val, _sc(val) * g
    if e.fn == "sqrt":
        if np.any(np.asarray(v) < 0.0):
            raise DomainError("sqrt of negative value")
        val = np.sqrt(v)
        _check_finite_div(val)
        return val, g / (2.0 * _sc(val))
    kappa = e.args[1].value
    val = np.logaddexp(0.0, kappa * v) / kappa
    return val, _sc(expit(kappa * v)) * g


def _sc(v):
    """Append a trailing axis so values broadcast against gradient stacks."""
    a = np.asarray(v)
    return a[..., None] if a.ndim else a


# ---------------------------------------------------------------------------
# Interval evaluation

def eval_interval(e: Expr, box: IntervalBox) -> Interval:
    """Natural interval extension over an axis-aligned box."""
    try:
        return _eval_iv(e, box.intervals())
    except IntervalDomainError as err:
        raise DomainError(str(err)) from err


def _eval_iv(e: Expr, xs: list[Interval]) -> Interval:
    if isinstance(e, Num):
        return Interval.point(e.value)
    if isinstance(e, Var):
        if e.index >= len(xs):
            raise DomainError(
                f"expression uses x{e.index + 1} but box has dimension {len(xs)}")
        return xs[e.index]
    if isinstance(e, Neg):
        return -_eval_iv(e.arg, xs)
    if isinstance(e, Bin):
        a, b = _eval_iv(e.left, xs), _eval_iv(e.right, xs)
        return {"+": a.__add__, "-": a.__sub__, "*": a.__mul__, "/": a.__truediv__}[e.op](b)
    if isinstance(e, Pow):
        return _eval_iv(e.base, xs).pow_int(e.exponent)
    a = _eval_iv(e.args[0], xs)
    if e.fn == "exp":
        return a.exp()
    if e.fn == "sqrt":
        return a.sqrt()
    if e.fn == "abs":
        return a.abs()
    if e.fn == "min":
        return a.min(_eval_iv(e.args[1], xs))
    if e.fn == "max":
        return a.max(_eval_iv(e.args[1], xs))
    return a.smoothplus(e.args[1].value)


def grad_interval(e: Expr, box: IntervalBox) -> tuple[Interval, list[Interval]]:
    """Forward-mode differentiation with interval coefficients.

    Returns enclosures of the value and each partial derivative over the box.
    """
    try:
        v, g = _eval_grad_iv(e, box.intervals(), box.n)
        return v, list(g)
    except IntervalDomainError as err:
        raise DomainError(str(err)) from err


def _eval_grad_iv(e: Expr, xs: list[Interval], n: int):
    zero = Interval.point(0.0)
    if isinstance(e, Num):
        return Interval.point(e.value), [zero] * n
    if isinstance(e, Var):
        g = [zero] * n
        g[e.index] = Interval.point(1.0)
        return xs[e.index], g
    if isinstance(e, Neg):
        v, g = _eval_grad_iv(e.arg, xs, n)
        return -v, [-gi for gi in g]
    if isinstance(e, Bin):
        va, ga = _eval_grad_iv(e.left, xs, n)
        vb, gb = _eval_grad_iv(e.right, xs, n)
        if e.op == "+":
            return va + vb, [a + b for a, b in zip(ga, gb)]
        if e.op == "-":
            return va - vb, [a - b for a, b in zip(ga, gb)]
        if e.op == "*":
            return va * vb, [va * b + vb * a for a, b in zip(ga, gb)]
        val = va / vb
        den = vb * vb
        return val, [(a * vb - va * b) / den for a, b in zip(ga, gb)]
    if isinstance(e, Pow):
        v, g = _eval_grad_iv(e.base, xs, n)
        k = e.exponent
        if k == 0:
            return Interval.point(1.0), [zero] * n
        dv = Interval.point(float(k)) * v.pow_int(k - 1)
        return v.pow_int(k), [dv * gi for gi in g]
    if e.fn in ("abs", "min", "max"):
        raise NonDifferentiableError(f"{e.fn} is not differentiable")
    v, g = _eval_grad_iv(e.args[0], xs, n)
    if e.fn == "exp":
        val = v.exp()
        return val, [val * gi for gi in g]
    if e.fn == "sqrt":
        val = v.sqrt()
        half = Interval.point(0.5)
        return val, [half * (gi / val) for gi in g]
    kappa = e.args[1].value
    sig = v.sigmoid(kappa)
    return v.smoothplus(kappa), [sig * gi for gi in g]


# ---------------------------------------------------------------------------
# Compilation to fast numpy callables

def compile_expr(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Build a vectorised evaluator.

    The compiled form skips the strict domain checks of eval_expr; invalid
    regions produce nan/inf, which downstream blow-up guards treat as escape.
    """
    src = _codegen(e)
    fn = eval(f"lambda x, np=np: {src}", {"np": np})  # noqa: S307 - internal AST only

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = fn(x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])

    evaluate.source = src
    return evaluate


def _codegen(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[..., {e.index}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, Bin):
        return f"({_codegen(e.left)} {e.op} {_codegen(e.right)})"
    if isinstance(e, Pow):
        exp = f"{e.exponent}." if e.exponent < 0 else f"{e.exponent}"
        return f"({_codegen(e.base)}) ** {exp}"
    a = _codegen(e.args[0])
    if e.fn == "exp":
        return f"np.exp({a})"
    if e.fn == "sqrt":
        return f"np.sqrt({a})"
    if e.fn == "abs":
        return f"np.abs({a})"
    if e.fn == "min":
        return f"np.minimum({a}, {_codegen(e.args[1])})"
    if e.fn == "max":
        return f"np.maximum({a}, {_codegen(e.args[1])})"
    kappa = repr(e.args[1].value)
    return f"(np.logaddexp(0.0, {kappa} * ({a})) / {kappa})"


def smoothplus(u, kappa: float = 1.0):
    """Stable softplus log(1 + exp(kappa*u)) / kappa for arrays or scalars."""
    return np.logaddexp(0.0, kappa * np.asarray(u, dtype=float)) / kappa


def smoothplus_deriv(u, kappa: float = 1.0):
    return expit(kappa * np.asarray(u, dtype=float))
