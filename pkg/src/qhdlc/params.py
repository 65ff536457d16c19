"""Arithmetic over named scalar parameters.

Generic maps in QHDL bind component generics to small arithmetic
expressions over the enclosing entity's generics and numeric literals.
These expressions are kept symbolic until compile time, when actual
parameter values are supplied.  Kinds form the lattice int < real < complex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .errors import QhdlcError

Number = Union[float, complex]

KIND_ORDER = {"int": 0, "real": 1, "complex": 2}


class ParamError(QhdlcError):
    """Unknown name or kind violation inside a parameter expression."""


class ParamExpr:
    """Base class for parameter-expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(ParamExpr):
    value: float
    integral: bool = False


@dataclass(frozen=True)
class Cplx(ParamExpr):
    re: "ParamExpr"
    im: "ParamExpr"


@dataclass(frozen=True)
class Ref(ParamExpr):
    name: str


@dataclass(frozen=True)
class Neg(ParamExpr):
    operand: "ParamExpr"


@dataclass(frozen=True)
class BinOp(ParamExpr):
    op: str  # one of + - * /
    lhs: "ParamExpr"
    rhs: "ParamExpr"


def evaluate(expr: ParamExpr, env: Mapping[str, Number]) -> Number:
    """Evaluate an expression; names resolve through `env`."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Cplx):
        re = evaluate(expr.re, env)
        im = evaluate(expr.im, env)
        if isinstance(re, complex) or isinstance(im, complex):
            raise ParamError("complex literal components must be real")
        return complex(re, im)
    if isinstance(expr, Ref):
        if expr.name not in env:
            raise ParamError(f"unknown name '{expr.name}' in expression")
        return env[expr.name]
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, BinOp):
        a = evaluate(expr.lhs, env)
        b = evaluate(expr.rhs, env)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            return a / b
    raise ParamError(f"malformed expression node {expr!r}")


def infer_kind(expr: ParamExpr, kinds: Mapping[str, str]) -> str:
    """Infer the kind of an expression given the kinds of referenced names."""
    if isinstance(expr, Num):
        return "int" if expr.integral else "real"
    if isinstance(expr, Cplx):
        for part in (expr.re, expr.im):
            if infer_kind(part, kinds) == "complex":
                raise ParamError("complex literal components must be real")
        return "complex"
    if isinstance(expr, Ref):
        if expr.name not in kinds:
            raise ParamError(f"unknown name '{expr.name}' in expression")
        return kinds[expr.name]
    if isinstance(expr, Neg):
        return infer_kind(expr.operand, kinds)
    if isinstance(expr, BinOp):
        k = max(infer_kind(expr.lhs, kinds), infer_kind(expr.rhs, kinds),
                key=KIND_ORDER.__getitem__)
        # integer division is not tracked; '/' promotes to at least real
        if expr.op == "/" and k == "int":
            k = "real"
        return k
    raise ParamError(f"malformed expression node {expr!r}")


def references(expr: ParamExpr) -> set[str]:
    """All names referenced by an expression."""
    if isinstance(expr, Ref):
        return {expr.name}
    if isinstance(expr, Neg):
        return references(expr.operand)
    if isinstance(expr, BinOp):
        return references(expr.lhs) | references(expr.rhs)
    if isinstance(expr, Cplx):
        return references(expr.re) | references(expr.im)
    return set()


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def render(expr: ParamExpr) -> str:
    """Deterministic text form; `parse` is its inverse."""
    return _render(expr, 0)


def _render(expr: ParamExpr, parent_prec: int) -> str:
    if isinstance(expr, Num):
        if expr.integral:
            return str(int(expr.value))
        return repr(expr.value)
    if isinstance(expr, Cplx):
        return f"({_render(expr.re, 0)}, {_render(expr.im, 0)})"
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Neg):
        inner = _render(expr.operand, 3)
        text = f"-{inner}"
        return f"({text})" if parent_prec >= 3 else text
    if isinstance(expr, BinOp):
        prec = _PRECEDENCE[expr.op]
        lhs = _render(expr.lhs, prec - 1)
        rhs = _render(expr.rhs, prec)  # left associative
        text = f"{lhs} {expr.op} {rhs}"
        return f"({text})" if parent_prec >= prec else text
    raise ParamError(f"malformed expression node {expr!r}")


def parse(text: str) -> ParamExpr:
    """Parse the textual expression form (used when loading JSON artifacts)."""
    parser = _MiniParser(text)
    expr = parser.expression()
    parser.expect_end()
    return expr


class _MiniParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect_end(self):
        if self._peek():
            raise ParamError(f"trailing input in expression: {self.text[self.pos:]!r}")

    def expression(self) -> ParamExpr:
        node = self.term()
        while self._peek() in "+-":
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> ParamExpr:
        node = self.factor()
        while self._peek() in "*/":
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> ParamExpr:
        if self._peek() == "-":
            self.pos += 1
            return Neg(self.factor())
        return self.atom()

    def atom(self) -> ParamExpr:
        c = self._peek()
        if c == "(":
            self.pos += 1
            first = self.expression()
            if self._peek() == ",":
                self.pos += 1
                second = self.expression()
                if self._peek() != ")":
                    raise ParamError("expected ')' after complex literal")
                self.pos += 1
                return Cplx(first, second)
            if self._peek() != ")":
                raise ParamError("expected ')'")
            self.pos += 1
            return first
        if c.isdigit():
            return self._number()
        if c.isalpha() or c == "_":
            start = self.pos
            while self.pos < len(self.text) and (
                    self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
                self.pos += 1
            return Ref(self.text[start:self.pos].lower())
        raise ParamError(f"unexpected character {c!r} in expression")

    def _number(self) -> Num:
        start = self.pos
        integral = True
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            integral = False
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            integral = False
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        return Num(float(self.text[start:self.pos]), integral)
