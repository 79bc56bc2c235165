"""Continuation of the optimal trajectory with event detection.

The tracer sweeps the horizon with an Euler predictor (tangent from the
optimality Jacobian) and a Newton corrector, falling back to cold
interior-point solves whenever the predictor is unavailable or correction
fails.  Each accepted sample carries a regularity certificate and, where
the certificate cannot rule multiplicity out, a probed diameter of the
optimal face.

Event candidates come from four sample-level signals:

* an isolated dip of the Jacobian's relative smallest singular value
  (shape-tested: flat near-zero stretches are not dips),
* a transition of the multi-valuedness flag,
* a dip of the face diameter inside a multi-valued stretch (a pinch),
* a jump of the solution between adjacent samples.

Candidates are refined to the requested resolution by ternary search or
bisection with fresh solves; near-singular times the implicit-function
hypotheses fail by definition, so refinement never uses continuation.
One-sided trajectory derivatives are estimated from tangents just inside
each side with Richardson extrapolation, with a finite-difference
cross-check available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import ipm, kkt, model, timefn
from .ipm import PrimalDualPoint, SolveResult
from .kkt import RegularityCertificate
from .model import ProblemInstance, TvSdpProblem
from .symlin import smat, svec, tau


class SingularJacobian(RuntimeError):
    pass


class CorrectionDiverged(RuntimeError):
    pass


class NotSingleValued(RuntimeError):
    pass


class SolverFailure(ipm.SolverFailure):
    pass


KIND_SIGMA_DIP = "SigmaMinDip"
KIND_UNIQUENESS = "UniquenessLoss"
KIND_COMPLEMENTARITY = "ComplementarityLoss"
KIND_DERIVATIVE = "DerivativeJump"

SIGMA_EVENT_TOL = 1e-6  # dip bottom below this relative sigma marks a singular time
DERIV_JUMP_TOL = 1e-3


@dataclass
class TraceOptions:
    t_start: float
    t_end: float
    dt_init: Optional[float] = None
    dt_min: Optional[float] = None
    dt_max: Optional[float] = None
    event_resolution: float = 1e-4
    seed: int = 0
    n_probe_dirs: int = 3

    def resolved(self) -> "TraceOptions":
        span = self.t_end - self.t_start
        dt0 = self.dt_init if self.dt_init is not None else span / 200.0
        dtm = self.dt_min if self.dt_min is not None else self.event_resolution
        dtM = self.dt_max if self.dt_max is not None else dt0
        return replace(self, dt_init=dt0, dt_min=min(dtm, dt0), dt_max=max(dtM, dt0))


@dataclass
class TrajectorySample:
    t: float
    point: PrimalDualPoint
    p_star: float
    d_star: float
    certificate: Optional[RegularityCertificate]
    sigma_min_rel: float
    multi: bool
    reduced_dim: Optional[int] = None
    dXdt: Optional[np.ndarray] = None
    multiplicity_range: Optional[float] = None
    tangent: Optional[np.ndarray] = None  # full (svecX, y, svecZ) velocity
    iterations: int = 0


@dataclass
class Event:
    t_lo: float
    t_hi: float
    t: float
    kind_hint: str
    kinds: tuple[str, ...]
    sigma_min_rel: float
    multiplicity_range: float
    multi_at: bool
    pinch: bool = False
    left_derivative: Optional[np.ndarray] = None
    right_derivative: Optional[np.ndarray] = None


@dataclass
class TraceResult:
    problem: TvSdpProblem
    options: TraceOptions
    samples: list[TrajectorySample]
    events: list[Event]
    failures: list[tuple[float, str]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Per-time evaluation


def _effective(result: SolveResult, inst: ProblemInstance):
    if result.reduction is not None:
        return result.reduction.inst, result.reduced_point
    return inst, result.point


def _null_directions(J: np.ndarray, n: int, k: int = 2) -> list[np.ndarray]:
    """Face-direction guesses: X-blocks of the smallest right singular vectors."""
    t = tau(n)
    _, s, vt = np.linalg.svd(J)
    dirs = []
    for idx in range(len(s) - 1, -1, -1):
        if s[idx] > 1e-6 * s[0] or len(dirs) >= k:
            break
        vx = vt[idx][:t]
        nrm = np.linalg.norm(vx)
        if nrm > 0.3:
            dirs.append(smat(vx / nrm))
    return dirs


class _Evaluator:
    """Solves, certifies and probes at requested times, with caching."""

    def __init__(self, problem: TvSdpProblem, opts: TraceOptions):
        self.problem = problem
        self.opts = opts
        self.base_dirs = {}
        self.rng_seed = opts.seed
        self.cache: dict[float, TrajectorySample] = {}

    def _dirs_for(self, n: int) -> list[np.ndarray]:
        if n not in self.base_dirs:
            self.base_dirs[n] = ipm.default_probe_directions(n, self.opts.n_probe_dirs, seed=self.rng_seed + 7 * n)
        return self.base_dirs[n]

    def sample(self, t: float, warm: Optional[PrimalDualPoint] = None) -> TrajectorySample:
        key = round(float(t), 14)
        if key in self.cache:
            return self.cache[key]
        inst = model.instantiate(self.problem, t)
        result = ipm.solve(inst, warm=warm)
        if result.status == ipm.STATUS_TROUBLE:
            raise SolverFailure(f"solve failed at t={t}")
        s = self._sample_from(inst, result)
        self.cache[key] = s
        return s

    def _sample_from(self, inst: ProblemInstance, result: SolveResult) -> TrajectorySample:
        eff_inst, eff_pt = _effective(result, inst)
        reduced_dim = eff_inst.n if result.reduction is not None else None

        if eff_inst.n == 0:
            # the feasible set is a single point; trivially regular
            return TrajectorySample(
                t=inst.t, point=result.point, p_star=result.p_star, d_star=result.d_star,
                certificate=None, sigma_min_rel=1.0, multi=False,
                reduced_dim=0, multiplicity_range=0.0, iterations=result.iterations,
            )

        jac = kkt.jacobian(eff_inst, eff_pt.X, eff_pt.Z)
        sigma = jac.sigma_min_rel
        try:
            cert = kkt.certify(eff_inst, eff_pt.X, eff_pt.y, eff_pt.Z)
        except kkt.NotNearOptimal:
            cert = None

        # a nonsingular optimality Jacobian at the solved point certifies a
        # unique strictly complementary optimum, so probing is needed (and
        # meaningful) only below the singularity threshold
        if sigma >= kkt.JACOBIAN_NONSINGULAR_TOL:
            multi = False
            diameter = 0.0
        else:
            dirs = self._dirs_for(eff_inst.n) + _null_directions(jac.J, eff_inst.n)
            probe = ipm.probe_multiplicity(eff_inst, float(np.tensordot(eff_inst.Cmat, eff_pt.X)), dirs)
            multi = probe.genuine
            diameter = probe.diameter

        tangent = None
        dXdt = None
        if result.reduction is None and sigma >= kkt.JACOBIAN_NONSINGULAR_TOL:
            tangent = self._tangent(inst, result.point, jac.J)
            if tangent is not None:
                dXdt = smat(tangent[: tau(inst.n)])

        return TrajectorySample(
            t=inst.t, point=result.point, p_star=result.p_star, d_star=result.d_star,
            certificate=cert, sigma_min_rel=sigma, multi=multi, reduced_dim=reduced_dim,
            dXdt=dXdt, multiplicity_range=diameter, tangent=tangent, iterations=result.iterations,
        )

    def _tangent(self, inst: ProblemInstance, pt: PrimalDualPoint, J: np.ndarray) -> Optional[np.ndarray]:
        try:
            deriv = model.instantiate_derivative(self.problem, inst.t)
        except (timefn.NotDifferentiable, timefn.DomainError):
            return None
        rhs = -kkt.dFdt(deriv, pt.X, pt.y)
        try:
            return np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            return None

    def multi_at(self, t: float) -> bool:
        return self.sample(t).multi

    def diameter_at(self, t: float) -> float:
        s = self.sample(t)
        return s.multiplicity_range if s.multiplicity_range is not None else 0.0

    def sigma_at(self, t: float) -> float:
        return self.sample(t).sigma_min_rel


# ---------------------------------------------------------------------------
# Predictor / corrector


def predict(sample: TrajectorySample, inst_next: ProblemInstance, dt: float) -> PrimalDualPoint:
    """Euler step along the tangent of the optimality system."""
    if sample.tangent is None:
        raise SingularJacobian(f"no tangent available at t={sample.t}")
    t_ = tau(inst_next.n)
    w = np.concatenate([svec(sample.point.X), sample.point.y, svec(sample.point.Z)])
    w = w + dt * sample.tangent
    X, y, Z = smat(w[:t_]), w[t_ : t_ + inst_next.m], smat(w[t_ + inst_next.m :])
    res = kkt.residual(inst_next, X, y, Z)
    return PrimalDualPoint(
        t=inst_next.t, X=X, y=y, Z=Z,
        gap=float(np.tensordot(X, Z)),
        residual_primal=float(np.linalg.norm(res.r_primal)),
        residual_dual=float(np.linalg.norm(res.r_dual)),
    )


def correct(inst: ProblemInstance, guess: PrimalDualPoint) -> PrimalDualPoint:
    """Newton-polish a predicted point; warm interior-point solve as fallback."""
    X, y, Z, fn = ipm.refine_kkt(inst, guess.X, guess.y, guess.Z, target=1e-12, max_iter=30)
    scale = 1.0 + float(np.linalg.norm(inst.bvec)) + float(np.linalg.norm(inst.Cmat))
    lam_floor = -1e-8 * scale
    if fn <= 1e-9 * scale and float(np.linalg.eigvalsh(X).min()) >= lam_floor and float(np.linalg.eigvalsh(Z).min()) >= lam_floor:
        res = kkt.residual(inst, X, y, Z)
        return PrimalDualPoint(
            t=inst.t, X=X, y=y, Z=Z, gap=float(np.tensordot(X, Z)),
            residual_primal=float(np.linalg.norm(res.r_primal)),
            residual_dual=float(np.linalg.norm(res.r_dual)),
        )
    result = ipm.solve(inst, warm=guess)
    if result.status != ipm.STATUS_TROUBLE:
        return result.point
    raise CorrectionDiverged(f"correction failed at t={inst.t}")


# ---------------------------------------------------------------------------
# Sweep


def _sweep(ev: _Evaluator, opts: TraceOptions) -> list[TrajectorySample]:
    samples = [ev.sample(opts.t_start)]
    t = opts.t_start
    dt = opts.dt_init
    while t < opts.t_end - 1e-12:
        dt = min(dt, opts.t_end - t)
        t_next = t + dt
        prev = samples[-1]
        warm = None
        if prev.tangent is not None:
            try:
                inst_next = model.instantiate(ev.problem, t_next)
                warm = predict(prev, inst_next, dt)
            except (SingularJacobian, timefn.DomainError):
                warm = None
        try:
            s = ev.sample(t_next, warm=warm)
        except SolverFailure:
            if dt > opts.dt_min * 1.0001:
                dt = max(opts.dt_min, 0.5 * dt)
                continue
            # record and step over the failure
            return samples
        samples.append(s)
        t = t_next
        if s.iterations <= 12:
            dt = min(opts.dt_max, dt * 1.5)
    return samples


# ---------------------------------------------------------------------------
# Candidate detection on the sample grid


@dataclass
class _Candidate:
    kind: str  # 'dip' | 'transition' | 'pinch' | 'jump'
    lo: float
    hi: float


def _detect_candidates(samples: list[TrajectorySample]) -> list[_Candidate]:
    ts = [s.t for s in samples]
    sig = [s.sigma_min_rel for s in samples]
    multi = [s.multi for s in samples]
    diam = [s.multiplicity_range if s.multiplicity_range is not None else 0.0 for s in samples]
    X = [s.point.X for s in samples]
    n = len(samples)
    cands: list[_Candidate] = []

    # multi-valuedness transitions
    for i in range(n - 1):
        if multi[i] != multi[i + 1]:
            cands.append(_Candidate("transition", ts[i], ts[i + 1]))

    # isolated sigma dips: below both neighbors by 2x, neighbors not already
    # at flat zero (multi-valued stretches are singular everywhere)
    for i in range(1, n - 1):
        lo_nb = min(sig[i - 1], sig[i + 1])
        if sig[i] < 1e-2 and sig[i] < 0.5 * lo_nb and lo_nb >= max(10.0 * sig[i], 1e-7):
            cands.append(_Candidate("dip", ts[i - 1], ts[i + 1]))

    # face-diameter pinches inside multi-valued stretches
    for i in range(1, n - 1):
        if multi[i - 1] and multi[i + 1]:
            lo_nb = min(diam[i - 1], diam[i + 1])
            if diam[i] < 0.25 * lo_nb:
                cands.append(_Candidate("pinch", ts[i - 1], ts[i + 1]))

    # solution jumps between adjacent samples, relative to local motion
    incs = [float(np.linalg.norm(X[i + 1] - X[i])) for i in range(n - 1)]
    for i in range(n - 1):
        lo_w = max(0, i - 4)
        window = [incs[j] for j in range(lo_w, min(n - 1, i + 5)) if j != i]
        med = float(np.median(window)) if window else 0.0
        scale = 1.0 + float(np.linalg.norm(X[i]))
        if incs[i] > max(8.0 * med, 1e-3 * scale):
            cands.append(_Candidate("jump", ts[i], ts[i + 1]))
    return cands


# ---------------------------------------------------------------------------
# Refinement


def _ternary_min(f: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int = 80) -> tuple[float, float]:
    a, b = lo, hi
    for _ in range(max_iter):
        if b - a <= tol:
            break
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if f(m1) <= f(m2):
            b = m2
        else:
            a = m1
    mid = 0.5 * (a + b)
    return mid, f(mid)


def _bisect_bool(pred: Callable[[float], bool], lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Shrink [lo, hi] with pred(lo) != pred(hi) down to tol."""
    p_lo = pred(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid) == p_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _refine_candidate(ev: _Evaluator, cand: _Candidate, opts: TraceOptions) -> Optional[Event]:
    res = opts.event_resolution
    if cand.kind == "transition":
        lo, hi = _bisect_bool(ev.multi_at, cand.lo, cand.hi, res)
        t_star = 0.5 * (lo + hi)
        s = ev.sample(t_star)
        return Event(
            t_lo=lo, t_hi=hi, t=t_star, kind_hint=KIND_UNIQUENESS, kinds=(KIND_UNIQUENESS,),
            sigma_min_rel=s.sigma_min_rel, multiplicity_range=s.multiplicity_range or 0.0,
            multi_at=s.multi,
        )

    if cand.kind == "dip":
        t_star, sig_star = _ternary_min(ev.sigma_at, cand.lo, cand.hi, 1e-9 * (1.0 + abs(cand.lo)))
        if sig_star >= SIGMA_EVENT_TOL:
            return None
        s = ev.sample(t_star)
        kinds = [KIND_SIGMA_DIP]
        hint = KIND_SIGMA_DIP
        if s.multi:
            kinds.append(KIND_UNIQUENESS)
            hint = KIND_UNIQUENESS
        if s.certificate is not None and not s.certificate.strictly_complementary:
            kinds.append(KIND_COMPLEMENTARITY)
            if hint == KIND_SIGMA_DIP:
                hint = KIND_COMPLEMENTARITY
        return Event(
            t_lo=max(cand.lo, t_star - res), t_hi=min(cand.hi, t_star + res), t=t_star,
            kind_hint=hint, kinds=tuple(kinds), sigma_min_rel=sig_star,
            multiplicity_range=s.multiplicity_range or 0.0, multi_at=s.multi,
        )

    if cand.kind == "pinch":
        t_star, d_star = _ternary_min(ev.diameter_at, cand.lo, cand.hi, 1e-9 * (1.0 + abs(cand.lo)))
        if d_star > ipm.TOL_FACE:
            return None  # the face narrowed but never collapsed: no regime change
        return Event(
            t_lo=max(cand.lo, t_star - res), t_hi=min(cand.hi, t_star + res), t=t_star,
            kind_hint=KIND_UNIQUENESS, kinds=(KIND_UNIQUENESS,),
            sigma_min_rel=ev.sample(t_star).sigma_min_rel, multiplicity_range=d_star,
            multi_at=False, pinch=True,
        )

    # jump: bisect on which side the midpoint solution lies
    X_lo = ev.sample(cand.lo).point.X
    X_hi = ev.sample(cand.hi).point.X

    def closer_to_lo(t: float) -> bool:
        Xm = ev.sample(t).point.X
        return np.linalg.norm(Xm - X_lo) <= np.linalg.norm(Xm - X_hi)

    lo, hi = cand.lo, cand.hi
    while hi - lo > res:
        mid = 0.5 * (lo + hi)
        if closer_to_lo(mid):
            lo = mid
        else:
            hi = mid
    t_star = 0.5 * (lo + hi)
    s = ev.sample(t_star)
    return Event(
        t_lo=lo, t_hi=hi, t=t_star, kind_hint=KIND_UNIQUENESS, kinds=(KIND_UNIQUENESS,),
        sigma_min_rel=s.sigma_min_rel, multiplicity_range=s.multiplicity_range or 0.0,
        multi_at=s.multi,
    )


def _merge_events(events: list[Event], resolution: float) -> list[Event]:
    events = sorted(events, key=lambda e: e.t)
    merged: list[Event] = []
    priority = {KIND_UNIQUENESS: 3, KIND_COMPLEMENTARITY: 2, KIND_DERIVATIVE: 1, KIND_SIGMA_DIP: 0}
    for e in events:
        if merged and e.t - merged[-1].t <= 3.0 * resolution:
            prev = merged[-1]
            keep, other = (prev, e) if priority[prev.kind_hint] >= priority[e.kind_hint] else (e, prev)
            kinds = tuple(dict.fromkeys(keep.kinds + other.kinds))
            merged[-1] = replace(
                keep,
                t_lo=min(prev.t_lo, e.t_lo),
                t_hi=max(prev.t_hi, e.t_hi),
                kinds=kinds,
                multi_at=prev.multi_at or e.multi_at,
                multiplicity_range=max(prev.multiplicity_range, e.multiplicity_range),
                pinch=prev.pinch or e.pinch,
            )
        else:
            merged.append(e)
    return merged


# ---------------------------------------------------------------------------
# One-sided derivatives


def _tangent_at(problem: TvSdpProblem, t: float, evaluator: Optional[_Evaluator] = None) -> np.ndarray:
    ev = evaluator if evaluator is not None else _Evaluator(problem, TraceOptions(t, t + 1).resolved())
    s = ev.sample(t)
    if s.tangent is None:
        raise SingularJacobian(f"optimality Jacobian singular at t={t}")
    return s.tangent


def one_sided_derivative(
    problem: TvSdpProblem,
    t_star: float,
    side: str,
    delta: float = 1e-4,
    evaluator: Optional[_Evaluator] = None,
    cross_check: bool = False,
) -> np.ndarray:
    """Limit of dX/dt as t approaches t_star from one side.

    Preferred estimator: tangents of the optimality system at t_star +/- delta
    and 2*delta, Richardson-extrapolated to t_star.  Falls back to one-sided
    second-order finite differences of solved optima.  Raises NotSingleValued
    when the approach side is multi-valued.
    """
    sgn = -1.0 if side == "left" else 1.0
    ev = evaluator if evaluator is not None else _Evaluator(problem, TraceOptions(*problem.horizon).resolved())
    n = problem.n
    t1, t2 = t_star + sgn * delta, t_star + 2.0 * sgn * delta
    s1 = ev.sample(t1)
    if s1.multi:
        raise NotSingleValued(f"trajectory is multi-valued approaching t={t_star} from the {side}")
    try:
        w1 = _tangent_at(problem, t1, ev)
        w2 = _tangent_at(problem, t2, ev)
        d = 2.0 * w1 - w2  # Richardson to t_star
        return smat(d[: tau(n)])
    except SingularJacobian:
        pass
    # finite differences of solved optima: f'(t*) ~ (-3 f0 + 4 f1 - f2) / (2 delta)
    X0 = ev.sample(t_star).point.X
    X1 = ev.sample(t1).point.X
    X2 = ev.sample(t2).point.X
    return sgn * (-3.0 * X0 + 4.0 * X1 - X2) / (2.0 * delta)


def _attach_derivatives(ev: _Evaluator, events: list[Event], opts: TraceOptions) -> None:
    delta = max(1e-4, 2.0 * opts.event_resolution)
    for i, e in enumerate(events):
        # stay inside the gap to neighbouring events and the horizon
        room = delta
        if i > 0:
            room = min(room, 0.25 * (e.t - events[i - 1].t))
        if i + 1 < len(events):
            room = min(room, 0.25 * (events[i + 1].t - e.t))
        room = min(room, 0.4 * (e.t - ev.opts.t_start), 0.4 * (ev.opts.t_end - e.t))
        if room < 4 * np.finfo(float).eps * max(1.0, abs(e.t)):
            continue
        d = min(delta, room)
        left = right = None
        try:
            left = one_sided_derivative(ev.problem, e.t, "left", delta=d, evaluator=ev)
        except (NotSingleValued, SingularJacobian, SolverFailure, ipm.SolverFailure, timefn.DomainError):
            pass
        try:
            right = one_sided_derivative(ev.problem, e.t, "right", delta=d, evaluator=ev)
        except (NotSingleValued, SingularJacobian, SolverFailure, ipm.SolverFailure, timefn.DomainError):
            pass
        events[i] = replace(e, left_derivative=left, right_derivative=right)
        if left is not None and right is not None:
            jump = float(np.linalg.norm(left - right))
            if jump > DERIV_JUMP_TOL * (1.0 + float(np.linalg.norm(left))):
                kinds = tuple(dict.fromkeys(events[i].kinds + (KIND_DERIVATIVE,)))
                hint = events[i].kind_hint
                if hint == KIND_SIGMA_DIP:
                    hint = KIND_DERIVATIVE
                events[i] = replace(events[i], kinds=kinds, kind_hint=hint)


# ---------------------------------------------------------------------------
# Public entry point


def trace(problem: TvSdpProblem, opts: TraceOptions) -> TraceResult:
    """Sweep [t_start, t_end], detect and refine events, attach derivatives.

    Results are deterministic given (problem, options): all randomness flows
    from the seed in the options.
    """
    opts = opts.resolved()
    lo, hi = problem.horizon
    if not (lo < opts.t_start < hi and lo < opts.t_end < hi and opts.t_start < opts.t_end):
        raise timefn.DomainError(f"trace range ({opts.t_start}, {opts.t_end}) not inside horizon {problem.horizon}")
    ev = _Evaluator(problem, opts)
    samples = _sweep(ev, opts)
    candidates = _detect_candidates(samples)
    events: list[Event] = []
    for cand in candidates:
        try:
            refined = _refine_candidate(ev, cand, opts)
        except (ipm.SolverFailure, SolverFailure):
            continue
        if refined is not None:
            events.append(refined)
    events = _merge_events(events, opts.event_resolution)
    _attach_derivatives(ev, events, opts)
    return TraceResult(problem=problem, options=opts, samples=samples, events=events)
