"""Time-varying SDP problem objects, assumption checks, and the example library.

A problem is given in standard primal form

    minimize   <C(t), X>
    subject to <A_i(t), X> = b_i(t),  i = 1..m,   X >= 0 (PSD),

over an open time horizon.  Problems stated as a linear matrix inequality
F(v) >= 0 are encoded by taking the LMI matrix itself as X and pinning its
fixed entries with equality rows; scalar LP examples become diagonal SDPs
so the whole analysis pipeline applies unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import timefn
from .symlin import svec, tau
from .timefn import DomainError, TimeMat, as_expr


class UnknownExample(KeyError):
    pass


@dataclass(frozen=True)
class TvSdpProblem:
    name: str
    n: int
    m: int
    A: tuple[TimeMat, ...]
    b: tuple[timefn.Expr, ...]
    C: TimeMat
    horizon: tuple[float, float]
    notes: str = ""

    def __post_init__(self):
        if self.m > tau(self.n):
            raise ValueError(f"m={self.m} exceeds svec dimension {tau(self.n)}")
        if not self.horizon[0] < self.horizon[1]:
            raise ValueError("horizon must be a nonempty open interval")
        if len(self.A) != self.m or len(self.b) != self.m:
            raise ValueError("A and b must both have m entries")

    def contains(self, t: float) -> bool:
        return self.horizon[0] < t < self.horizon[1]


@dataclass(frozen=True)
class ProblemInstance:
    """All data evaluated at one time, with the stacked svec operator."""

    t: float
    n: int
    m: int
    Amats: tuple[np.ndarray, ...]
    bvec: np.ndarray
    Cmat: np.ndarray
    Atilde: np.ndarray  # m x tau(n), row i = svec(A_i)


@dataclass(frozen=True)
class InstanceDerivative:
    """Time derivatives of the data at one time (one-sided inside a branch)."""

    t: float
    Aprime: tuple[np.ndarray, ...]
    bprime: np.ndarray
    Cprime: np.ndarray
    Atilde_prime: np.ndarray


def instantiate(problem: TvSdpProblem, t: float) -> ProblemInstance:
    if not problem.contains(t):
        raise DomainError(f"t={t} outside horizon {problem.horizon}")
    Amats = tuple(Ai.value(t) for Ai in problem.A)
    bvec = np.array([timefn.evaluate(bi, t) for bi in problem.b])
    Cmat = problem.C.value(t)
    Atilde = np.vstack([svec(Ai) for Ai in Amats]) if Amats else np.zeros((0, tau(problem.n)))
    return ProblemInstance(
        t=float(t), n=problem.n, m=problem.m, Amats=Amats, bvec=bvec, Cmat=Cmat, Atilde=Atilde
    )


def instantiate_derivative(problem: TvSdpProblem, t: float) -> InstanceDerivative:
    """Evaluate d/dt of (A, b, C) at t.

    Raises timefn.NotDifferentiable when t sits exactly on a data breakpoint;
    callers working one-sidedly should stay strictly inside a branch.
    """
    Aprime = tuple(Ai.derivative().value(t) for Ai in problem.A)
    bprime = np.array([timefn.evaluate(timefn.differentiate(bi), t) for bi in problem.b])
    Cprime = problem.C.derivative().value(t)
    Ap_tilde = (
        np.vstack([svec(Ai) for Ai in Aprime]) if Aprime else np.zeros((0, tau(problem.n)))
    )
    return InstanceDerivative(t=float(t), Aprime=Aprime, bprime=bprime, Cprime=Cprime, Atilde_prime=Ap_tilde)


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass(frozen=True)
class LicqReport:
    rank: int
    satisfied: bool
    sigma_min: float


def check_licq(inst: ProblemInstance, tol: float = 1e-10) -> LicqReport:
    """Full row rank of the stacked svec(A_i) operator."""
    if inst.m == 0:
        return LicqReport(rank=0, satisfied=True, sigma_min=np.inf)
    s = np.linalg.svd(inst.Atilde, compute_uv=False)
    rank = int(np.count_nonzero(s > tol * max(s[0], 1.0)))
    return LicqReport(rank=rank, satisfied=rank == inst.m, sigma_min=float(s[-1]))


@dataclass(frozen=True)
class FeasibilityMargins:
    """Largest lambda with X - lambda*I (resp. dual slack) still feasible, capped at 1."""

    primal_margin: float
    dual_margin: float


def check_strict_feasibility(inst: ProblemInstance) -> FeasibilityMargins:
    from . import ipm  # local import; ipm depends on this module's types

    return ipm.strict_feasibility_margins(inst)


@dataclass(frozen=True)
class ContinuityReport:
    continuous: bool
    violations: tuple[tuple[str, float, float], ...]  # (where, breakpoint, gap)


def audit_continuity(problem: TvSdpProblem, tol: float = 1e-9) -> ContinuityReport:
    lo, hi = problem.horizon
    bad: list[tuple[str, float, float]] = []

    def scan(label: str, exprs):
        for e in exprs:
            for c, gap in timefn.audit_continuity(e, lo, hi, tol=tol):
                bad.append((label, c, gap))

    for i, Ai in enumerate(problem.A):
        scan(f"A[{i}]", Ai.exprs())
    scan("b", problem.b)
    scan("C", problem.C.exprs())
    return ContinuityReport(continuous=not bad, violations=tuple(bad))


# ---------------------------------------------------------------------------
# Built-in example library
#
# Helper for pinned-entry constraint rows: E(i, j) has ones at (i, j) and
# (j, i), so <E(i, j), X> equals 2*X_ij off the diagonal and X_ii on it.


def _E(n: int, i: int, j: int, v: float = 1.0) -> np.ndarray:
    M = np.zeros((n, n))
    M[i, j] += v
    if i != j:
        M[j, i] += v
    return M


def _const_rows(mats: Sequence[np.ndarray]) -> tuple[TimeMat, ...]:
    return tuple(TimeMat.constant(M) for M in mats)


def _exprs(items: Sequence) -> tuple[timefn.Expr, ...]:
    return tuple(as_expr(x) for x in items)


_F_OSC = "piecewise(t > 0: t*sin(pi/t), else: 0)"  # vanishes at t = 1/k
_G_RAMP = "piecewise(t > 0: 2*t, else: 0)"
_H_OSC2 = "piecewise(t > 0: 2*t*sin(pi/t)^2, else: 0)"
_H_OSC2_NEG = "piecewise(t < 0: -2*t*sin(pi/t)^2, else: 0)"


def _p1() -> TvSdpProblem:
    # min t*x + t*y + z over the unit-diagonal 3x3 spectrahedron
    # (X12 = x, X13 = y, X23 = z).
    n = 3
    A = _const_rows([_E(n, 0, 0), _E(n, 1, 1), _E(n, 2, 2)])
    b = _exprs([1, 1, 1])
    C = TimeMat.from_upper([["0", "t/2", "t/2"], ["0", "1/2"], ["0"]])
    return TvSdpProblem("P1", n, 3, A, b, C, (-3.0, 2.0), notes="unit-diagonal spectrahedron, moving objective")


def _d1() -> TvSdpProblem:
    # Dual partner of P1 in primal form: off-diagonal entries pinned to
    # (t/2, t/2, 1/2), minimize the trace.
    n = 3
    A = _const_rows([_E(n, 0, 1), _E(n, 0, 2), _E(n, 1, 2)])
    b = _exprs(["t", "t", "1"])
    C = TimeMat.constant(np.eye(n))
    return TvSdpProblem("D1", n, 3, A, b, C, (-3.0, 2.0), notes="trace minimization with pinned off-diagonals")


def _p2() -> TvSdpProblem:
    # P1's spectrahedron with an extra diagonal entry tied to 1 + x + y + z.
    n = 4
    rows = [_E(n, 0, 0), _E(n, 1, 1), _E(n, 2, 2)]
    b: list = [1, 1, 1]
    for i in range(3):
        rows.append(_E(n, i, 3, 0.5))  # X_{i4} = 0
        b.append(0)
    tie = _E(n, 3, 3) - 0.5 * (_E(n, 0, 1) + _E(n, 0, 2) + _E(n, 1, 2))
    rows.append(tie)  # X44 - x - y - z = 1
    b.append(1)
    C = TimeMat.from_upper([["0", "t/2", "t/2", "0"], ["0", "1/2", "0"], ["0", "0"], ["0"]])
    return TvSdpProblem("P2", n, 7, _const_rows(rows), _exprs(b), C, (-2.0, 1.0))


def _p3() -> TvSdpProblem:
    n = 4
    rows = [
        _E(n, 3, 3) - _E(n, 2, 2),  # X44 - X33 = 0
        _E(n, 1, 1),  # X22 = 1
        _E(n, 0, 1) + _E(n, 2, 2) + _E(n, 3, 3),  # 2*X12 + X33 + X44 = -t
    ]
    b = _exprs([0, 1, "-t"])
    C = TimeMat.constant(_E(n, 0, 0))
    return TvSdpProblem("P3", n, 3, _const_rows(rows), b, C, (-1.0, 1.0))


def _d3() -> TvSdpProblem:
    # Dual partner of P3 in primal form; block-diagonal 4x4 with coupled
    # diagonal tail: X33 + X44 = 2*X12.
    n = 4
    rows = [_E(n, 0, 0)]
    b: list = [1]
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]:
        rows.append(_E(n, i, j, 0.5))
        b.append(0)
    rows.append(_E(n, 2, 2) + _E(n, 3, 3) - _E(n, 0, 1))  # X33 + X44 - 2*X12 = 0
    b.append(0)
    C = TimeMat.from_upper([["0", "-t/2", "0", "0"], ["1", "0", "0"], ["0", "0"], ["0"]])
    return TvSdpProblem("D3", n, 7, _const_rows(rows), _exprs(b), C, (-1.0, 1.0))


def _oscillating_box_problem(name: str, box_expr: str, C: TimeMat) -> TvSdpProblem:
    # 5x5 block problem: P1's spectrahedron plus a 2x2 box block
    # [[w(t), x - y], [x - y, w(t)]] that pins |x - y| <= w(t).
    n = 5
    rows = [_E(n, 0, 0), _E(n, 1, 1), _E(n, 2, 2)]
    b: list = [1, 1, 1]
    rows += [_E(n, 3, 3), _E(n, 4, 4)]
    b += [box_expr, box_expr]
    for i in range(3):
        for j in (3, 4):
            rows.append(_E(n, i, j, 0.5))
            b.append(0)
    coupling = _E(n, 3, 4, 0.5) - 0.5 * _E(n, 0, 1) + 0.5 * _E(n, 0, 2)  # X45 = x - y
    rows.append(coupling)
    b.append(0)
    return TvSdpProblem(name, n, 12, _const_rows(rows), _exprs(b), C, (-1.0, 1.0))


def _p4() -> TvSdpProblem:
    C = TimeMat(
        5,
        {
            (0, 1): as_expr(f"({_F_OSC})/2"),
            (0, 2): as_expr(f"-({_F_OSC})/2"),
            (1, 2): as_expr("1/2"),
        },
    )
    return _oscillating_box_problem("P4", _G_RAMP, C)


def _p5() -> TvSdpProblem:
    C = TimeMat(5, {(1, 2): as_expr("1/2")})
    return _oscillating_box_problem("P5", _H_OSC2, C)


def _lp(name: str, A0: np.ndarray, b0, c11) -> TvSdpProblem:
    C = TimeMat(2, {(0, 0): as_expr(c11)} if c11 != 0 else {})
    return TvSdpProblem(name, 2, 1, _const_rows([A0]), _exprs([b0]), C, (-1.0, 1.0))


_BUILDERS = {
    "P1": _p1,
    "P2": _p2,
    "P3": _p3,
    "P4": _p4,
    "P5": _p5,
    "D1": _d1,
    "D3": _d3,
    # Scalar problems as 2x2 diagonal SDPs.  LP1/LP2: X = diag(x, slack)
    # with x - slack pinned to the bound.  LP3..LP6: X = diag(u, s) with
    # u + s equal to the interval width, u = x + half-width.
    "LP1": lambda: _lp("LP1", np.diag([1.0, -1.0]), "1 + t", "1"),
    "LP2": lambda: _lp("LP2", np.diag([1.0, -1.0]), "abs(t)", "1"),
    "LP3": lambda: _lp("LP3", np.eye(2), "2", "t"),
    "LP4": lambda: _lp("LP4", np.eye(2), "2", "piecewise(t <= 0: t, else: 0)"),
    "LP5": lambda: _lp("LP5", np.eye(2), _G_RAMP, 0),
    "LP6": lambda: _lp("LP6", np.eye(2), _H_OSC2_NEG, 0),
}


def builtin(name: str) -> TvSdpProblem:
    """Return a built-in example problem by name (P1..P5, D1, D3, LP1..LP6)."""
    key = name.upper()
    if key not in _BUILDERS:
        raise UnknownExample(f"unknown example {name!r}; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[key]()


def builtin_names() -> list[str]:
    return sorted(_BUILDERS)
