"""Scalar functions of time: parsing, evaluation, exact differentiation.

Problem data enters as expression strings over the single variable ``t``.
The grammar covers what the built-in problem library needs and nothing
more: arithmetic, integer powers, ``sin``/``cos``/``abs``, the constant
``pi``, and guarded piecewise definitions such as

    piecewise(t > 0: t*sin(pi/t), else: 0)

Guards compare ``t`` against a constant; branches are tried in order.
Differentiation is symbolic.  Derivatives of piecewise expressions are
taken branch by branch and refuse evaluation exactly at a breakpoint;
derivatives of ``abs`` go through an internal sign node that refuses at
zero.  A numeric continuity audit checks that one-sided limits agree at
every breakpoint, which is how continuity of problem data over the time
horizon gets verified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class ExprSyntaxError(ValueError):
    """Malformed expression source; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(ExprSyntaxError):
    pass


class DomainError(ArithmeticError):
    """Evaluation outside the expression's domain (e.g. division by zero)."""


class NotDifferentiable(ValueError):
    """Derivative requested where it does not exist."""


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()

    def eval(self, t: float) -> float:
        raise NotImplementedError

    def diff(self) -> "Expr":
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval(self, t):
        return self.value

    def diff(self):
        return Const(0.0)

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expr):
    def eval(self, t):
        return float(t)

    def diff(self):
        return Const(1.0)

    def __str__(self):
        return "t"


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def eval(self, t):
        a = self.left.eval(t)
        b = self.right.eval(t)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError(f"division by zero at t={t}")
        return a / b

    def diff(self):
        a, b, da, db = self.left, self.right, self.left.diff(), self.right.diff()
        if self.op in ("+", "-"):
            return Binary(self.op, da, db)
        if self.op == "*":
            return Binary("+", Binary("*", da, b), Binary("*", a, db))
        # quotient rule: (a/b)' = (a'b - ab') / b^2
        num = Binary("-", Binary("*", da, b), Binary("*", a, db))
        return Binary("/", num, Pow(b, 2))

    def breakpoints(self):
        return self.left.breakpoints() + self.right.breakpoints()

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def eval(self, t):
        return -self.arg.eval(t)

    def diff(self):
        return Neg(self.arg.diff())

    def breakpoints(self):
        return self.arg.breakpoints()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def eval(self, t):
        return self.base.eval(t) ** self.exponent

    def diff(self):
        if self.exponent == 0:
            return Const(0.0)
        if self.exponent == 1:
            return self.base.diff()
        return Binary(
            "*",
            Binary("*", Const(float(self.exponent)), Pow(self.base, self.exponent - 1)),
            self.base.diff(),
        )

    def breakpoints(self):
        return self.base.breakpoints()

    def __str__(self):
        return f"({self.base}^{self.exponent})"


@dataclass(frozen=True)
class Call(Expr):
    """sin/cos/abs plus the internal 'sign' produced by differentiation."""

    name: str
    arg: Expr

    def eval(self, t):
        x = self.arg.eval(t)
        if self.name == "sin":
            return math.sin(x)
        if self.name == "cos":
            return math.cos(x)
        if self.name == "abs":
            return abs(x)
        if x == 0.0:
            raise NotDifferentiable("abs is not differentiable at 0")
        return math.copysign(1.0, x)

    def diff(self):
        inner = self.arg.diff()
        if self.name == "sin":
            outer: Expr = Call("cos", self.arg)
        elif self.name == "cos":
            outer = Neg(Call("sin", self.arg))
        elif self.name == "abs":
            outer = Call("sign", self.arg)
        else:
            raise NotDifferentiable("sign has no derivative in this grammar")
        return Binary("*", outer, inner)

    def breakpoints(self):
        return self.arg.breakpoints()

    def __str__(self):
        return f"{self.name}({self.arg})"


_GUARD_OPS = {"<", "<=", ">", ">="}


def _guard_holds(op: str, t: float, c: float) -> bool:
    if op == "<":
        return t < c
    if op == "<=":
        return t <= c
    if op == ">":
        return t > c
    return t >= c


@dataclass(frozen=True)
class Piecewise(Expr):
    """Guarded branches tried in order; optional else branch.

    ``strict_breakpoints`` marks derivative expressions: evaluation exactly
    at a guard constant then raises NotDifferentiable.
    """

    branches: tuple[tuple[str, float, Expr], ...]
    otherwise: Optional[Expr]
    strict_breakpoints: bool = False

    def eval(self, t):
        if self.strict_breakpoints and any(t == c for _, c, _ in self.branches):
            raise NotDifferentiable(f"piecewise breakpoint at t={t}")
        for op, c, expr in self.branches:
            if _guard_holds(op, t, c):
                return expr.eval(t)
        if self.otherwise is not None:
            return self.otherwise.eval(t)
        raise DomainError(f"no piecewise branch covers t={t}")

    def diff(self):
        branches = tuple((op, c, expr.diff()) for op, c, expr in self.branches)
        otherwise = self.otherwise.diff() if self.otherwise is not None else None
        return Piecewise(branches, otherwise, strict_breakpoints=True)

    def breakpoints(self):
        pts = tuple(c for _, c, _ in self.branches)
        for _, _, expr in self.branches:
            pts += expr.breakpoints()
        if self.otherwise is not None:
            pts += self.otherwise.breakpoints()
        return pts

    def branch_at(self, t: float) -> Expr:
        for op, c, expr in self.branches:
            if _guard_holds(op, t, c):
                return expr
        if self.otherwise is not None:
            return self.otherwise
        raise DomainError(f"no piecewise branch covers t={t}")

    def __str__(self):
        parts = [f"t {op} {c}: {e}" for op, c, e in self.branches]
        if self.otherwise is not None:
            parts.append(f"else: {self.otherwise}")
        return "piecewise(" + ", ".join(parts) + ")"


# ---------------------------------------------------------------------------
# Parser: tokenizer + recursive descent

_FUNCS = ("sin", "cos", "abs")


class _Tokenizer:
    def __init__(self, src: str):
        self.src = src
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self._skip_ws()
        if self.pos >= len(self.src):
            return ("end", "", self.pos)
        i = self.pos
        ch = self.src[i]
        if ch.isdigit() or ch == ".":
            j = i
            seen_dot = False
            while j < len(self.src) and (self.src[j].isdigit() or (self.src[j] == "." and not seen_dot)):
                seen_dot = seen_dot or self.src[j] == "."
                j += 1
            if j < len(self.src) and self.src[j] in "eE":
                k = j + 1
                if k < len(self.src) and self.src[k] in "+-":
                    k += 1
                if k < len(self.src) and self.src[k].isdigit():
                    while k < len(self.src) and self.src[k].isdigit():
                        k += 1
                    j = k
            return ("number", self.src[i:j], i)
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(self.src) and (self.src[j].isalnum() or self.src[j] == "_"):
                j += 1
            return ("ident", self.src[i:j], i)
        for two in ("<=", ">="):
            if self.src.startswith(two, i):
                return ("op", two, i)
        if ch in "+-*/^(),:<>":
            return ("op", ch, i)
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)

    def next(self):
        kind, text, offset = self.peek()
        self.pos = offset + len(text)
        return kind, text, offset


class _Parser:
    def __init__(self, src: str):
        self.tok = _Tokenizer(src)

    def parse(self) -> Expr:
        e = self._expr()
        kind, text, offset = self.tok.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {text!r}", offset)
        return e

    def _expect(self, want: str):
        kind, text, offset = self.tok.next()
        if text != want:
            raise ExprSyntaxError(f"expected {want!r}, got {text!r}", offset)

    def _expr(self) -> Expr:
        e = self._term()
        while True:
            kind, text, _ = self.tok.peek()
            if kind == "op" and text in "+-":
                self.tok.next()
                e = Binary(text, e, self._term())
            else:
                return e

    def _term(self) -> Expr:
        e = self._factor()
        while True:
            kind, text, _ = self.tok.peek()
            if kind == "op" and text in "*/":
                self.tok.next()
                e = Binary(text, e, self._factor())
            else:
                return e

    def _factor(self) -> Expr:
        e = self._unary()
        kind, text, _ = self.tok.peek()
        if kind == "op" and text == "^":
            self.tok.next()
            kind, text, offset = self.tok.next()
            if kind != "number" or not text.isdigit():
                raise ExprSyntaxError("exponent must be a nonnegative integer", offset)
            e = Pow(e, int(text))
        return e

    def _unary(self) -> Expr:
        kind, text, _ = self.tok.peek()
        if kind == "op" and text == "-":
            self.tok.next()
            return Neg(self._unary())
        if kind == "op" and text == "+":
            self.tok.next()
            return self._unary()
        return self._atom()

    def _atom(self) -> Expr:
        kind, text, offset = self.tok.next()
        if kind == "number":
            return Const(float(text))
        if kind == "ident":
            if text == "t":
                return Var()
            if text == "pi":
                return Const(math.pi)
            if text in _FUNCS:
                self._expect("(")
                arg = self._expr()
                self._expect(")")
                return Call(text, arg)
            if text == "piecewise":
                return self._piecewise()
            raise UnknownIdentifier(f"unknown identifier {text!r}", offset)
        if kind == "op" and text == "(":
            e = self._expr()
            self._expect(")")
            return e
        raise ExprSyntaxError(f"unexpected token {text!r}" if text else "unexpected end of input", offset)

    def _signed_constant(self) -> float:
        kind, text, offset = self.tok.next()
        sign = 1.0
        if kind == "op" and text in "+-":
            sign = -1.0 if text == "-" else 1.0
            kind, text, offset = self.tok.next()
        if kind == "number":
            return sign * float(text)
        if kind == "ident" and text == "pi":
            return sign * math.pi
        raise ExprSyntaxError("guard bound must be a constant", offset)

    def _piecewise(self) -> Expr:
        self._expect("(")
        branches: list[tuple[str, float, Expr]] = []
        otherwise: Optional[Expr] = None
        while True:
            kind, text, offset = self.tok.peek()
            if kind == "ident" and text == "else":
                self.tok.next()
                self._expect(":")
                otherwise = self._expr()
                self._expect(")")
                return Piecewise(tuple(branches), otherwise)
            if kind == "ident" and text == "t":
                self.tok.next()
                okind, op, ooff = self.tok.next()
                if okind != "op" or op not in _GUARD_OPS:
                    raise ExprSyntaxError("guard must compare t with <, <=, > or >=", ooff)
                c = self._signed_constant()
                self._expect(":")
                expr = self._expr()
                branches.append((op, c, expr))
                kind, text, offset = self.tok.next()
                if text == ")":
                    return Piecewise(tuple(branches), otherwise)
                if text != ",":
                    raise ExprSyntaxError(f"expected ',' or ')', got {text!r}", offset)
            else:
                raise ExprSyntaxError("expected guard 't <op> c' or 'else'", offset)


def parse_expr(src: str) -> Expr:
    """Parse an expression string over t into an AST."""
    return _Parser(src).parse()


def evaluate(e: Expr, t: float) -> float:
    return float(e.eval(float(t)))


def differentiate(e: Expr) -> Expr:
    """Exact symbolic derivative with respect to t."""
    return e.diff()


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse_expr(x)
    return Const(float(x))


def _one_sided_limit(e: Expr, c: float, side: int) -> float:
    """Numeric one-sided limit; used where direct evaluation hits a pole."""
    for delta in (1e-10, 1e-11, 1e-12):
        try:
            return evaluate(e, c + side * delta)
        except (DomainError, NotDifferentiable):
            continue
    raise DomainError(f"cannot evaluate near t={c}")


def breakpoints_in(e: Expr, lo: float, hi: float) -> list[float]:
    return sorted({c for c in e.breakpoints() if lo < c < hi})


def continuity_gap(e: Expr, c: float) -> float:
    """|left limit - right limit| of e at c, via one-sided evaluation."""
    left = _one_sided_limit(e, c, -1)
    right = _one_sided_limit(e, c, +1)
    return abs(left - right)


def audit_continuity(e: Expr, lo: float, hi: float, tol: float = 1e-9) -> list[tuple[float, float]]:
    """Return the list of (breakpoint, gap) pairs violating continuity."""
    bad = []
    for c in breakpoints_in(e, lo, hi):
        gap = continuity_gap(e, c)
        if gap > tol:
            bad.append((c, gap))
    return bad


# ---------------------------------------------------------------------------
# Symmetric matrices of time expressions


class TimeMat:
    """Symmetric n x n grid of time expressions; (i, j) and (j, i) share a node."""

    def __init__(self, n: int, entries: dict[tuple[int, int], Expr]):
        self.n = n
        self._entries = {}
        for (i, j), e in entries.items():
            if not (0 <= i <= j < n):
                raise DimensionMismatch(f"bad entry index {(i, j)} for n={n}")
            self._entries[(i, j)] = e

    @classmethod
    def from_upper(cls, rows) -> "TimeMat":
        """Build from upper-triangular rows of expression strings/numbers."""
        n = len(rows)
        entries: dict[tuple[int, int], Expr] = {}
        for i, row in enumerate(rows):
            if len(row) != n - i:
                raise DimensionMismatch(f"row {i} must have {n - i} entries, got {len(row)}")
            for k, cell in enumerate(row):
                entries[(i, i + k)] = as_expr(cell)
        return cls(n, entries)

    @classmethod
    def constant(cls, M: np.ndarray) -> "TimeMat":
        M = np.asarray(M, dtype=float)
        n = M.shape[0]
        entries = {
            (i, j): Const(float(M[i, j]))
            for i in range(n)
            for j in range(i, n)
            if M[i, j] != 0.0
        }
        return cls(n, entries)

    def entry(self, i: int, j: int) -> Expr:
        if i > j:
            i, j = j, i
        return self._entries.get((i, j), Const(0.0))

    def value(self, t: float) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        for (i, j), e in self._entries.items():
            v = evaluate(e, t)
            M[i, j] = v
            M[j, i] = v
        return M

    def derivative(self) -> "TimeMat":
        return TimeMat(self.n, {ij: differentiate(e) for ij, e in self._entries.items()})

    def exprs(self):
        return list(self._entries.values())

    def is_constant(self) -> bool:
        return all(isinstance(e, Const) for e in self._entries.values())
