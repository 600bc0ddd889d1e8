"""Rational expressions in the model parameters with exact gradients.

Grammar: numbers, parameters ``p0 .. p{d-1}``, ``+ - * /``, unary minus and
parentheses. Strings are parsed with :mod:`ast` and only the listed node
types are accepted.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import InputError

_PARAM = re.compile(r"^p(\d+)$")


class Expr:
    """Base node. Subclasses are frozen dataclasses, so nodes hash and compare structurally."""

    def evaluate(self, theta) -> float:
        raise NotImplementedError

    def value_and_grad(self, theta) -> Tuple[float, np.ndarray]:
        """Forward-mode evaluation returning the value and the gradient in R^d."""
        raise NotImplementedError

    def params(self) -> frozenset:
        raise NotImplementedError

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def evaluate(self, theta):
        return float(self.value)

    def value_and_grad(self, theta):
        return float(self.value), np.zeros(len(theta))

    def params(self):
        return frozenset()

    def __str__(self):
        return repr(float(self.value)) if self.value != int(self.value) else str(int(self.value))


@dataclass(frozen=True, eq=True)
class Param(Expr):
    index: int

    def evaluate(self, theta):
        return float(theta[self.index])

    def value_and_grad(self, theta):
        g = np.zeros(len(theta))
        g[self.index] = 1.0
        return float(theta[self.index]), g

    def params(self):
        return frozenset([self.index])

    def __str__(self):
        return f"p{self.index}"


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, theta):
        a, b = self.left.evaluate(theta), self.right.evaluate(theta)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0.0:
            raise ZeroDivisionError(f"division by zero in {self}")
        return a / b

    def value_and_grad(self, theta):
        a, da = self.left.value_and_grad(theta)
        b, db = self.right.value_and_grad(theta)
        if self.op == "+":
            return a + b, da + db
        if self.op == "-":
            return a - b, da - db
        if self.op == "*":
            return a * b, da * b + a * db
        if b == 0.0:
            raise ZeroDivisionError(f"division by zero in {self}")
        return a / b, (da * b - a * db) / (b * b)

    def params(self):
        return self.left.params() | self.right.params()

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


Number = Union[int, float]


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    if isinstance(x, str):
        return parse(x)
    raise InputError(f"cannot convert {x!r} to an expression")


_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def parse(text: str, dim: int = None) -> Expr:
    """Parse an expression string; optionally check parameter indices against ``dim``."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return Const(float(node.value))
        if isinstance(node, ast.Name):
            m = _PARAM.match(node.id)
            if not m:
                raise InputError(f"unknown name {node.id!r} in {text!r}; parameters are p0, p1, ...")
            j = int(m.group(1))
            if dim is not None and j >= dim:
                raise InputError(f"parameter p{j} out of range for dimension {dim} in {text!r}")
            return Param(j)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return BinOp(_BINOPS[type(node.op)], build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            return BinOp("-", Const(0.0), inner) if isinstance(node.op, ast.USub) else inner
        raise InputError(f"unsupported syntax {type(node).__name__} in {text!r}")

    return fold(build(tree))


def fold(e: Expr) -> Expr:
    """Constant folding plus the obvious additive/multiplicative identities."""
    if not isinstance(e, BinOp):
        return e
    left, right = fold(e.left), fold(e.right)
    if isinstance(left, Const) and isinstance(right, Const):
        if e.op == "/" and right.value == 0.0:
            raise InputError(f"constant division by zero in {e}")
        return Const(BinOp(e.op, left, right).evaluate(()))
    if e.op == "*" and (_is(left, 0.0) or _is(right, 0.0)):
        return Const(0.0)
    if e.op == "*" and _is(left, 1.0):
        return right
    if e.op in "*/" and _is(right, 1.0):
        return left
    if e.op == "+" and _is(left, 0.0):
        return right
    if e.op in "+-" and _is(right, 0.0):
        return left
    if e.op == "/" and _is(left, 0.0):
        return Const(0.0)
    if e.op == "-" and left == right:
        return Const(0.0)
    return BinOp(e.op, left, right)


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def substitute(e: Expr, replacements: Sequence[Expr]) -> Expr:
    """Replace every ``Param(j)`` with ``replacements[j]``."""
    if isinstance(e, Param):
        return replacements[e.index]
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, replacements), substitute(e.right, replacements))
    return e


def affine_reparam(theta0: Sequence[float], D: np.ndarray) -> Tuple[Expr, ...]:
    """Expressions for ``theta = theta0 + D @ t`` in the new parameters ``t``."""
    D = np.asarray(D, dtype=float)
    out = []
    for j in range(D.shape[0]):
        acc: Expr = Const(float(theta0[j]))
        for k in range(D.shape[1]):
            if D[j, k] != 0.0:
                acc = BinOp("+", acc, BinOp("*", Const(float(D[j, k])), Param(k)))
        out.append(acc)
    return tuple(out)
