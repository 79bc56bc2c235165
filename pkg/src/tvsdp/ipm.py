"""Fixed-time primal-dual interior-point solver for small dense SDPs.

A Mehrotra predictor-corrector method whose Newton system uses the
symmetrized complementarity residual svec(XZ + ZX)/2, so the iteration
matrix coincides with the analysis Jacobian in :mod:`tvsdp.kkt` and solver
conditioning speaks directly to singularity of the optimality system.
After the interior-point phase a Gauss-Newton polish drives the stacked
residual near machine precision, which matters at points where strict
complementarity fails and the plain central-path error is only O(sqrt(gap)).

Instances whose constraints pin a face of the cone (a PSD constraint row
with zero right-hand side) are preprocessed by facial reduction: the
problem is projected onto the null space of the pinning row, solved there,
and the solution lifted back.  That keeps the interior-point iteration on
problems with a strictly feasible core.

Also here: optimization of probe objectives over the eps-relaxed optimal
face (used to measure multiplicity of the optimal set) and strict
feasibility margins computed as auxiliary SDPs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kkt
from .model import ProblemInstance
from .symlin import smat, svec, symmetrize, tau


class SolverFailure(RuntimeError):
    pass


class NumericalTrouble(SolverFailure):
    """Newton system lost rank or iterates stalled; often signals loss of
    strict feasibility or proximity to a singular time."""


STATUS_OPTIMAL = "Optimal"
STATUS_MAX_ITER = "MaxIter"
STATUS_TROUBLE = "NumericalTrouble"

GAP_TOL = 1e-9
RES_TOL = 1e-9
FRACTION_TO_BOUNDARY = 0.98
MAX_ITER_DEFAULT = 200

EPS_FACE_COEFF = 1e-7
TOL_FACE = 1e-5


@dataclass(frozen=True)
class PrimalDualPoint:
    t: float
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    gap: float
    residual_primal: float
    residual_dual: float


@dataclass(frozen=True)
class Reduction:
    """Facial reduction record: full space = W * reduced space * W'."""

    W: np.ndarray  # n x n_red, orthonormal columns
    inst: ProblemInstance  # reduced instance
    kept_rows: tuple[int, ...]
    reducing_rows: tuple[tuple[int, float], ...]  # (row index, sign of the PSD row)


@dataclass(frozen=True)
class SolveResult:
    point: PrimalDualPoint
    p_star: float
    d_star: float
    status: str
    iterations: int
    reduction: Optional[Reduction] = None
    reduced_point: Optional[PrimalDualPoint] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OPTIMAL


# ---------------------------------------------------------------------------
# Facial reduction


def facial_reduction(inst: ProblemInstance, tol: float = 1e-9) -> Optional[Reduction]:
    """Project out cone directions pinned to zero by PSD constraint rows.

    Handles rows with A_k PSD (or NSD) and b_k = 0: feasible X must then
    vanish on the range of A_k.  Combination-level reductions (needing an
    auxiliary SDP) are out of scope.  Returns None when nothing reduces.
    """
    n = inst.n
    W = np.eye(n)
    mats = [np.array(A) for A in inst.Amats]
    bs = list(inst.bvec)
    rows = list(range(inst.m))
    reducing: list[tuple[int, float]] = []
    b_scale = 1.0 + float(np.linalg.norm(inst.bvec))

    changed = True
    while changed and W.shape[1] > 0:
        changed = False
        for k in range(len(mats)):
            if abs(bs[k]) > tol * b_scale:
                continue
            Ak = mats[k]
            nrm = float(np.abs(Ak).max(initial=0.0))
            if nrm <= tol:
                # vanished row with zero rhs: redundant
                del mats[k], bs[k], rows[k]
                changed = True
                break
            lam, V = np.linalg.eigh(symmetrize(Ak))
            if lam.min() >= -tol * nrm:
                sign = 1.0
            elif lam.max() <= tol * nrm:
                sign = -1.0
            else:
                continue
            null_cols = V[:, np.abs(lam) <= tol * nrm]
            reducing.append((rows[k], sign))
            W = W @ null_cols
            del mats[k], bs[k], rows[k]
            mats = [null_cols.T @ M @ null_cols for M in mats]
            changed = True
            break

    if not reducing:
        return None

    # rows that survived but lost all support and have nonzero rhs mean the
    # instance is infeasible on the reduced face
    keep_mats, keep_bs, keep_rows = [], [], []
    for M, bk, rk in zip(mats, bs, rows):
        if float(np.abs(M).max(initial=0.0)) <= tol:
            if abs(bk) > tol * b_scale:
                raise NumericalTrouble(f"constraint row {rk} infeasible after facial reduction")
            continue
        keep_mats.append(M)
        keep_bs.append(bk)
        keep_rows.append(rk)

    n_red = W.shape[1]
    C_red = W.T @ inst.Cmat @ W
    Atilde = (
        np.vstack([svec(M) for M in keep_mats]) if keep_mats else np.zeros((0, tau(max(n_red, 1))))
    )
    red_inst = ProblemInstance(
        t=inst.t,
        n=n_red,
        m=len(keep_mats),
        Amats=tuple(keep_mats),
        bvec=np.array(keep_bs),
        Cmat=C_red,
        Atilde=Atilde,
    )
    return Reduction(W=W, inst=red_inst, kept_rows=tuple(keep_rows), reducing_rows=tuple(reducing))


# ---------------------------------------------------------------------------
# Core Mehrotra iteration (assumes the instance has a strictly feasible core)


def _steplength(M: np.ndarray, dM: np.ndarray) -> float:
    """sup alpha with M + alpha dM still PSD, for M positive definite."""
    n = M.shape[0]
    scale = max(1.0, float(np.trace(M)))
    shift = 1e-14 * scale
    lam_min_M = float(np.linalg.eigvalsh(M).min())
    if lam_min_M < shift:
        # iterate grazed the cone boundary; push before factorizing
        shift = shift - lam_min_M + 1e-13 * scale
    L = np.linalg.cholesky(M + shift * np.eye(n))
    S = np.linalg.solve(L, dM)
    S = np.linalg.solve(L, S.T).T
    lam_min = float(np.linalg.eigvalsh(symmetrize(S)).min())
    if lam_min >= -1e-14:
        return np.inf
    return -1.0 / lam_min


def _push_interior(M: np.ndarray, floor: float) -> np.ndarray:
    lam_min = float(np.linalg.eigvalsh(M).min())
    if lam_min < floor:
        return M + (floor - lam_min) * np.eye(M.shape[0])
    return M


def _mehrotra(
    inst: ProblemInstance,
    warm: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
    max_iter: int = MAX_ITER_DEFAULT,
    gap_tol: float = 1e-11,
    res_tol: float = 1e-11,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, bool]:
    n, m = inst.n, inst.m
    t = tau(n)
    Atil, b, C = inst.Atilde, inst.bvec, inst.Cmat
    I_n = np.eye(n)
    b_scale = 1.0 + float(np.linalg.norm(b))
    C_scale = 1.0 + float(np.linalg.norm(C))

    if warm is not None:
        X, y, Z = warm
        X = _push_interior(symmetrize(X), 1e-8 * (1.0 + abs(np.trace(X))))
        Z = _push_interior(symmetrize(Z), 1e-8 * (1.0 + abs(np.trace(Z))))
        y = np.array(y, dtype=float)
    else:
        a_scale = max([1.0] + [float(np.linalg.norm(A)) for A in inst.Amats])
        X = max(1.0, b_scale / a_scale) * I_n
        Z = max(1.0, C_scale / np.sqrt(n)) * I_n
        y = np.zeros(m)

    trouble = False
    it = 0
    stall = 0
    small_steps = 0
    best_merit = np.inf
    best_iterate = (X, y, Z)
    for it in range(1, max_iter + 1):
        rp = b - Atil @ svec(X)
        Rd = C - Z - smat(Atil.T @ y)
        gap = float(np.tensordot(X, Z))
        p_val = float(np.tensordot(C, X))
        rp_n = float(np.linalg.norm(rp))
        rd_n = float(np.linalg.norm(Rd))
        if gap <= gap_tol * (1.0 + abs(p_val)) and rp_n <= res_tol * b_scale and rd_n <= res_tol * C_scale:
            break
        merit = max(abs(gap) / (1.0 + abs(p_val)), rp_n / b_scale, rd_n / C_scale)
        if merit < 0.9 * best_merit:
            stall = 0
        else:
            stall += 1
        if merit < best_merit:
            best_merit = merit
            best_iterate = (X, y, Z)
        if stall > 60 or not np.isfinite(merit) or merit > 1e12:
            trouble = best_merit > 1e-4
            X, y, Z = best_iterate
            break

        mu = gap / n
        comp = 0.5 * (X @ Z + Z @ X)
        J = kkt.jacobian_matrix(Atil, X, Z)

        def solve_newton(rhs):
            try:
                return np.linalg.solve(J, rhs)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(J, rhs, rcond=None)
                return sol

        rhs_aff = np.concatenate([rp, svec(Rd), svec(-comp)])
        d_aff = solve_newton(rhs_aff)
        dXa, dZa = smat(d_aff[:t]), smat(d_aff[t + m :])
        ap = min(1.0, _steplength(X, dXa))
        ad = min(1.0, _steplength(Z, dZa))
        mu_aff = float(np.tensordot(X + ap * dXa, Z + ad * dZa)) / n
        ratio = min(1.0, max(0.0, mu_aff / mu)) if mu > 0 else 0.0
        sigma = ratio**3
        if small_steps >= 3:
            # steps collapsed: take a pure centering step to recover
            sigma = 1.0
            dXa, dZa = np.zeros_like(X), np.zeros_like(Z)

        cross = 0.5 * (dXa @ dZa + dZa @ dXa)
        rhs = np.concatenate([rp, svec(Rd), svec(sigma * mu * I_n - comp - cross)])
        d = solve_newton(rhs)
        dX, dy, dZ = smat(d[:t]), d[t : t + m], smat(d[t + m :])
        ap = min(1.0, FRACTION_TO_BOUNDARY * _steplength(X, dX))
        ad = min(1.0, FRACTION_TO_BOUNDARY * _steplength(Z, dZ))
        infeasible = rp_n > res_tol * b_scale or rd_n > res_tol * C_scale
        if infeasible:
            # synchronized steps keep residual contraction uniform
            ap = ad = min(ap, ad)
        small_steps = small_steps + 1 if min(ap, ad) < 1e-2 else 0
        if min(ap, ad) < 1e-12 and small_steps > 8:
            trouble = True
            break
        X = symmetrize(X + ap * dX)
        y = y + ad * dy
        Z = symmetrize(Z + ad * dZ)

    return X, y, Z, it, trouble


def refine_kkt(
    inst: ProblemInstance,
    X: np.ndarray,
    y: np.ndarray,
    Z: np.ndarray,
    target: float = 1e-14,
    max_iter: int = 80,
    psd_floor: float = -1e-7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Gauss-Newton polish of the optimality residual with a PSD safeguard.

    Works near a root; uses least squares so it degrades gracefully where
    the Jacobian is singular (it then converges linearly along the
    degenerate direction instead of diverging).
    """
    n, m = inst.n, inst.m
    t = tau(n)

    def unpack(w):
        return smat(w[:t]), w[t : t + m], smat(w[t + m :])

    w = np.concatenate([svec(X), np.asarray(y, dtype=float), svec(Z)])
    F = kkt.residual(inst, X, y, Z).stack()
    fn = float(np.linalg.norm(F))
    floor = psd_floor * (1.0 + float(np.linalg.norm(X)) + float(np.linalg.norm(Z)))
    for _ in range(max_iter):
        if fn <= target:
            break
        Xc, _, Zc = unpack(w)
        J = kkt.jacobian_matrix(inst.Atilde, Xc, Zc)
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        s = 1.0
        accepted = False
        while s >= 1e-4:
            w2 = w + s * step
            X2, y2, Z2 = unpack(w2)
            if (
                float(np.linalg.eigvalsh(X2).min()) < floor
                or float(np.linalg.eigvalsh(Z2).min()) < floor
            ):
                s *= 0.5
                continue
            F2 = kkt.residual(inst, X2, y2, Z2).stack()
            fn2 = float(np.linalg.norm(F2))
            if fn2 < (1.0 - 1e-4 * s) * fn:
                w, F, fn = w2, F2, fn2
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
    Xf, yf, Zf = unpack(w)
    return symmetrize(Xf), yf, symmetrize(Zf), fn


def _build_point(inst: ProblemInstance, X, y, Z) -> PrimalDualPoint:
    res = kkt.residual(inst, X, y, Z)
    return PrimalDualPoint(
        t=inst.t,
        X=X,
        y=y,
        Z=Z,
        gap=float(np.tensordot(X, Z)),
        residual_primal=float(np.linalg.norm(res.r_primal)),
        residual_dual=float(np.linalg.norm(res.r_dual)),
    )


def _status_for(point: PrimalDualPoint, p_star: float, iterations: int, trouble: bool) -> str:
    accurate = (
        point.gap <= GAP_TOL * (1.0 + abs(p_star))
        and point.residual_primal <= RES_TOL
        and point.residual_dual <= RES_TOL
    )
    if accurate:
        return STATUS_OPTIMAL
    if trouble:
        return STATUS_TROUBLE
    return STATUS_MAX_ITER


def _lift_multipliers(inst: ProblemInstance, red: Reduction, y_red: np.ndarray) -> np.ndarray:
    """Assign multipliers for reduced-away rows so the lifted dual slack is PSD."""
    y_full = np.zeros(inst.m)
    for pos, row in enumerate(red.kept_rows):
        y_full[row] = y_red[pos]

    def slack(scale: float) -> np.ndarray:
        y_try = y_full.copy()
        for row, sign in red.reducing_rows:
            y_try[row] = -sign * scale
        Z = inst.Cmat - smat(inst.Atilde.T @ y_try)
        return y_try, Z

    z_scale = 1.0 + float(np.linalg.norm(inst.Cmat))
    best_y, best_min = y_full, -np.inf
    for scale in (1.0, 0.0, 10.0, 100.0, 1e4):
        y_try, Z = slack(scale)
        lam_min = float(np.linalg.eigvalsh(Z).min())
        if lam_min >= -1e-9 * z_scale:
            return y_try
        if lam_min > best_min:
            best_y, best_min = y_try, lam_min
    return best_y


def solve(
    inst: ProblemInstance,
    warm: Optional[PrimalDualPoint] = None,
    max_iter: int = MAX_ITER_DEFAULT,
    polish: bool = True,
) -> SolveResult:
    """Solve one fixed-time instance to high accuracy.

    A warm-start point (pushed slightly into the cone interior) reduces the
    iteration count; accuracy targets do not change.  Facial reduction is
    applied automatically when constraint rows pin a face of the cone.
    """
    red = facial_reduction(inst)
    if red is not None:
        return _solve_reduced(inst, red, max_iter=max_iter, polish=polish)

    warm_tuple = (warm.X, warm.y, warm.Z) if warm is not None else None
    X, y, Z, iters, trouble = _mehrotra(inst, warm=warm_tuple, max_iter=max_iter)
    if polish:
        X, y, Z, _ = refine_kkt(inst, X, y, Z)
    point = _build_point(inst, X, y, Z)
    p_star = float(np.tensordot(inst.Cmat, X))
    d_star = float(inst.bvec @ y)
    return SolveResult(
        point=point,
        p_star=p_star,
        d_star=d_star,
        status=_status_for(point, p_star, iters, trouble),
        iterations=iters,
    )


def _solve_reduced(inst: ProblemInstance, red: Reduction, max_iter: int, polish: bool) -> SolveResult:
    n_red = red.W.shape[1]
    if n_red == 0:
        # the feasible set is the zero matrix
        y = _lift_multipliers(inst, red, np.zeros(0))
        X = np.zeros((inst.n, inst.n))
        Z = inst.Cmat - smat(inst.Atilde.T @ y)
        point = _build_point(inst, X, y, Z)
        p_star = 0.0
        status = STATUS_OPTIMAL if point.residual_primal <= RES_TOL else STATUS_TROUBLE
        return SolveResult(point=point, p_star=p_star, d_star=float(inst.bvec @ y), status=status, iterations=0, reduction=red)

    Xr, yr, Zr, iters, trouble = _mehrotra(red.inst, max_iter=max_iter)
    if polish:
        Xr, yr, Zr, _ = refine_kkt(red.inst, Xr, yr, Zr)
    red_point = _build_point(red.inst, Xr, yr, Zr)

    X = red.W @ Xr @ red.W.T
    y = _lift_multipliers(inst, red, yr)
    Z = inst.Cmat - smat(inst.Atilde.T @ y)
    point = _build_point(inst, X, y, Z)
    p_star = float(np.tensordot(inst.Cmat, X))
    d_star = float(inst.bvec @ y)
    return SolveResult(
        point=point,
        p_star=p_star,
        d_star=d_star,
        status=_status_for(red_point, p_star, iters, trouble),
        iterations=iters,
        reduction=red,
        reduced_point=red_point,
    )


# ---------------------------------------------------------------------------
# Optimal-face probing


def _block_diag(M: np.ndarray, corner: float) -> np.ndarray:
    n = M.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = M
    out[n, n] = corner
    return out


def face_instance(inst: ProblemInstance, p_star: float, eps: float, objective: np.ndarray) -> ProblemInstance:
    """Instance minimizing <objective, X> over the eps-relaxed optimal face.

    The relaxation <C, X> <= p_star + eps enters through one slack entry on
    an extra diagonal coordinate.
    """
    n = inst.n
    Amats = tuple(_block_diag(A, 0.0) for A in inst.Amats) + (_block_diag(inst.Cmat, 1.0),)
    bvec = np.concatenate([inst.bvec, [p_star + eps]])
    Atilde = np.vstack([svec(A) for A in Amats])
    return ProblemInstance(
        t=inst.t,
        n=n + 1,
        m=inst.m + 1,
        Amats=Amats,
        bvec=bvec,
        Cmat=_block_diag(objective, 0.0),
        Atilde=Atilde,
    )


def _scalarized_extreme(inst: ProblemInstance, G: np.ndarray, sense: str, nu: Optional[float] = None) -> float:
    """<G, X> at the optimum of <C + nu*G, X>: a face extreme up to O(nu) blur.

    Fallback probe for relaxed-face instances too thin for the interior-point
    iteration; solves a problem of the same class as the base instance.
    """
    if nu is None:
        nu = 1e-6 * (1.0 + float(np.linalg.norm(inst.Cmat))) / (1.0 + float(np.linalg.norm(G)))
    sign = 1.0 if sense == "min" else -1.0
    tilted = ProblemInstance(
        t=inst.t, n=inst.n, m=inst.m, Amats=inst.Amats, bvec=inst.bvec,
        Cmat=inst.Cmat + sign * nu * G,
        Atilde=inst.Atilde,
    )
    result = solve(tilted)
    if result.status == STATUS_TROUBLE:
        raise SolverFailure(f"scalarized probe failed at t={inst.t}")
    return float(np.tensordot(G, result.point.X))


def face_probe(
    inst: ProblemInstance,
    p_star: float,
    G: np.ndarray,
    sense: str,
    eps: Optional[float] = None,
    fallback: bool = True,
) -> float:
    """Optimal value of <G, X> over the eps-relaxed optimal face."""
    if eps is None:
        eps = EPS_FACE_COEFF * (1.0 + abs(p_star))
    sign = 1.0 if sense == "min" else -1.0
    result = solve(face_instance(inst, p_star, eps, sign * G))
    # probe values feed thresholded diameter comparisons; modest accuracy
    # (well below tol_face) is enough even when the probe SDP is cramped
    pt = result.point
    loose = (
        abs(pt.gap) <= 1e-6 * (1.0 + abs(result.p_star))
        and pt.residual_primal <= 1e-5 * (1.0 + float(np.linalg.norm(inst.bvec)))
        and pt.residual_dual <= 1e-5 * (1.0 + float(np.linalg.norm(inst.Cmat)))
    )
    if result.status == STATUS_TROUBLE and not loose:
        if fallback:
            return _scalarized_extreme(inst, G, sense)
        raise SolverFailure(f"face probe failed at t={inst.t}")
    cap = 1e6 * (1.0 + float(np.linalg.norm(inst.bvec)))
    val = sign * result.p_star
    if abs(val) > cap:
        raise NumericalTrouble("face probe value exceeded the diameter cap")
    return val


@dataclass(frozen=True)
class MultiplicityProbe:
    """Two-level probe of the optimal face along a set of directions.

    ``range_coarse``/``range_fine`` are the largest directional spreads at
    the base relaxation eps and at eps/4.  A genuine multi-valued face keeps
    its spread as eps shrinks, while the sqrt(eps) blur around a unique
    optimum at a smooth tangency halves; extrapolating the sqrt model,
    ``diameter`` estimates the spread of the unrelaxed face.
    """

    range_coarse: float
    range_fine: float
    eps: float
    genuine: bool

    @property
    def diameter(self) -> float:
        return max(0.0, 2.0 * self.range_fine - self.range_coarse)

    @property
    def range(self) -> float:
        return self.diameter


def probe_multiplicity(
    inst: ProblemInstance,
    p_star: float,
    directions: Sequence[np.ndarray],
    eps: Optional[float] = None,
    tol_face: float = TOL_FACE,
) -> MultiplicityProbe:
    if eps is None:
        eps = EPS_FACE_COEFF * (1.0 + abs(p_star))

    def spread(e: float) -> float:
        best = 0.0
        for G in directions:
            hi = face_probe(inst, p_star, G, "max", eps=e)
            lo = face_probe(inst, p_star, G, "min", eps=e)
            best = max(best, hi - lo)
        return best

    r1 = spread(eps)
    if r1 <= tol_face:
        return MultiplicityProbe(range_coarse=r1, range_fine=r1, eps=eps, genuine=False)
    r2 = spread(eps / 4.0)
    probe = MultiplicityProbe(range_coarse=r1, range_fine=r2, eps=eps, genuine=False)
    return MultiplicityProbe(range_coarse=r1, range_fine=r2, eps=eps, genuine=probe.diameter > tol_face)


def default_probe_directions(n: int, k: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(k):
        v = rng.standard_normal(tau(n))
        v /= np.linalg.norm(v)
        dirs.append(smat(v))
    return dirs


# ---------------------------------------------------------------------------
# Strict feasibility margins


@dataclass(frozen=True)
class Margins:
    primal_margin: float
    dual_margin: float


def strict_feasibility_margins(inst: ProblemInstance, cap: float = 1.0) -> Margins:
    """Interior radii of the primal and dual feasible sets, capped.

    The primal margin is max lambda with some feasible X satisfying
    X - lambda*I PSD; analogously for the dual slack.  Each is itself a
    small SDP; positivity certifies strict feasibility.  Values are capped
    (the dual margin is often unbounded) and accurate to solver tolerance.
    """
    n, m = inst.n, inst.m

    # primal: parametrize the affine set by a null-space basis of Atilde
    u, s, vt = np.linalg.svd(inst.Atilde)
    rank = int(np.count_nonzero(s > 1e-12 * max(s[0], 1.0))) if s.size else 0
    if rank < m:
        raise SolverFailure("margin computation requires independent constraint rows")
    x0 = vt[:rank].T @ ((u.T @ inst.bvec)[:rank] / s[:rank])
    X0 = smat(x0)
    null_rows = [smat(v) for v in vt[rank:]]
    ops = null_rows + [np.eye(n)]
    Amats = tuple(_block_diag(M, 0.0) for M in null_rows) + (_block_diag(np.eye(n), 1.0),)
    bvec = np.zeros(len(ops))
    bvec[-1] = 1.0
    aux = ProblemInstance(
        t=inst.t,
        n=n + 1,
        m=len(ops),
        Amats=Amats,
        bvec=bvec,
        Cmat=_block_diag(X0, cap),
        Atilde=np.vstack([svec(A) for A in Amats]),
    )
    primal = solve(aux, max_iter=120).d_star

    # dual: slack C - A*(y) - lambda*I PSD directly
    Amats2 = tuple(_block_diag(A, 0.0) for A in inst.Amats) + (_block_diag(np.eye(n), 1.0),)
    bvec2 = np.zeros(m + 1)
    bvec2[-1] = 1.0
    aux2 = ProblemInstance(
        t=inst.t,
        n=n + 1,
        m=m + 1,
        Amats=Amats2,
        bvec=bvec2,
        Cmat=_block_diag(inst.Cmat, cap),
        Atilde=np.vstack([svec(A) for A in Amats2]),
    )
    dual = solve(aux2, max_iter=120).d_star
    return Margins(primal_margin=float(primal), dual_margin=float(dual))
