"""Arithmetic expressions in x and y for configuration files.

Grammar (ASCII, whitespace ignored)::

    expr   := expr ('+' | '-') expr | expr ('*' | '/') expr
            | '-' expr | expr '^' expr | atom
    atom   := NUMBER | 'x' | 'y' | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := sin | cos | exp | ln | sqrt

Precedence from loosest: ``+ -``, ``* /``, unary minus, ``^`` (right
associative).  So ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is 512.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, offset: int, message: str):
        super().__init__(f"at offset {offset}: {message}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, x=None, y=None):
        loc = "" if x is None else f" at (x={x:.17g}, y={y:.17g})"
        super().__init__(message + loc)
        self.x, self.y = x, y


FUNCS = ("sin", "cos", "exp", "ln", "sqrt")
VARS = ("x", "y")

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]


def _tokenize(src: str):
    pos = 0
    toks = []
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            off = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(off, f"unexpected character {src[off]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


# binding powers for infix operators: (left, right)
_INFIX = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (41, 40)}
_PREFIX_MINUS = 30


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        kind, val, off = self.next()
        if val != value or kind != "op":
            got = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(off, f"expected {value!r}, got {got}")

    def parse(self, min_bp: int = 0) -> Expr:
        kind, val, off = self.next()
        if kind == "num":
            lhs: Expr = Num(float(val))
        elif kind == "name":
            if val in VARS:
                lhs = Var(val)
            elif val == "pi":
                lhs = Const("pi")
            elif val in FUNCS:
                self.expect("(")
                arg = self.parse(0)
                self.expect(")")
                lhs = Call(val, arg)
            else:
                raise UnknownIdentifierError(off, f"unknown identifier {val!r}")
        elif kind == "op" and val == "(":
            lhs = self.parse(0)
            self.expect(")")
        elif kind == "op" and val == "-":
            lhs = Neg(self.parse(_PREFIX_MINUS))
        elif kind == "op" and val == "+":
            raise ExprSyntaxError(off, "unary plus is not supported")
        else:
            got = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(off, f"expected a number, variable, function or '(', got {got}")
        while True:
            kind, val, off = self.peek()
            if kind == "end" or (kind == "op" and val == ")"):
                break
            if kind != "op" or val not in _INFIX:
                raise ExprSyntaxError(off, f"expected an operator, got {val!r}")
            lbp, rbp = _INFIX[val]
            if lbp < min_bp:
                break
            self.next()
            if val == "^":
                # the exponent may carry its own sign: 2^-1
                rhs = self.parse(min(rbp, _PREFIX_MINUS))
            else:
                rhs = self.parse(rbp)
            lhs = BinOp(val, lhs, rhs)
        return lhs


def parse(source: str) -> Expr:
    p = _Parser(source)
    tree = p.parse(0)
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(off, f"unexpected {val!r}")
    return tree


def to_string(e: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _first_bad(mask, x, y):
    idx = np.flatnonzero(np.broadcast_to(mask, np.broadcast(x, y, mask).shape))[0]
    xb, yb = np.broadcast_arrays(x, y, mask)[:2]
    return float(xb.flat[idx]), float(yb.flat[idx])


def _eval(e: Expr, x, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Const):
        return math.pi
    if isinstance(e, Neg):
        return -_eval(e.arg, x, y)
    if isinstance(e, Call):
        a = np.asarray(_eval(e.arg, x, y), dtype=float)
        if e.func == "ln":
            bad = a <= 0
            if np.any(bad):
                raise DomainError("ln of a non-positive value", *_first_bad(bad, x, y))
            return np.log(a)
        if e.func == "sqrt":
            bad = a < 0
            if np.any(bad):
                raise DomainError("sqrt of a negative value", *_first_bad(bad, x, y))
            return np.sqrt(a)
        with np.errstate(over="ignore"):
            return {"sin": np.sin, "cos": np.cos, "exp": np.exp}[e.func](a)
    left = np.asarray(_eval(e.left, x, y), dtype=float)
    right = np.asarray(_eval(e.right, x, y), dtype=float)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        bad = right == 0
        if np.any(bad):
            raise DomainError("division by zero", *_first_bad(bad, x, y))
        return left / right
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        out = np.power(left, right)
    bad = ~np.isfinite(out) & np.isfinite(left) & np.isfinite(right)
    if np.any(bad):
        raise DomainError("power undefined", *_first_bad(bad, x, y))
    return out


def evaluate(e: Expr, x, y):
    """Evaluate at scalars or broadcastable arrays."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    out = np.asarray(_eval(e, xa, ya), dtype=float)
    out = np.broadcast_to(out, np.broadcast(xa, ya).shape)
    return float(out) if out.ndim == 0 else out.copy()


def compile_expr(source: str):
    """Parse once and return ``f(x, y)``."""
    tree = parse(source)

    def fn(x, y):
        return evaluate(tree, x, y)

    fn.source = source
    fn.tree = tree
    return fn
