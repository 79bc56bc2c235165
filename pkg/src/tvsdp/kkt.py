"""First-order optimality system, its Jacobian, and regularity certificates.

The stacked residual for a fixed-time instance is

    F(X, y, Z) = [ Atilde svec(X) - b ]
                 [ Atilde' y + svec(Z) - svec(C) ]
                 [ svec(X Z + Z X) / 2 ]

whose zeros with X, Z PSD are exactly the optimal primal-dual points.  The
Jacobian with respect to (svec X, y, svec Z) has the block form

    [ Atilde     0         0       ]
    [ 0          Atilde'   I       ]
    [ skron(Z,I) 0         skron(I,X) ]

and its invertibility at an optimal point is equivalent to strict
complementarity plus primal and dual non-degeneracy.  This module also
enumerates all zeros of F (PSD or not) by a multi-start Newton search.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ProblemInstance
from .symlin import (
    DEFAULT_RANK_TOL,
    eig,
    numerical_rank,
    rank_from_eigenvalues,
    skron,
    smat,
    svec,
    tau,
)

JACOBIAN_NONSINGULAR_TOL = 1e-8


class DimensionMismatch(ValueError):
    pass


class NotNearOptimal(ValueError):
    """Certificate requested at a point that does not satisfy the optimality system."""


@dataclass(frozen=True)
class KktResidual:
    r_primal: np.ndarray  # m
    r_dual: np.ndarray  # tau(n)
    r_comp: np.ndarray  # tau(n)

    def stack(self) -> np.ndarray:
        return np.concatenate([self.r_primal, self.r_dual, self.r_comp])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.stack()))


def residual(inst: ProblemInstance, X: np.ndarray, y: np.ndarray, Z: np.ndarray) -> KktResidual:
    """Assemble the optimality residual at (X, y, Z)."""
    n, m = inst.n, inst.m
    if X.shape != (n, n) or Z.shape != (n, n) or np.shape(y) != (m,):
        raise DimensionMismatch(
            f"expected X,Z of shape {(n, n)} and y of length {m}, "
            f"got {X.shape}, {Z.shape}, {np.shape(y)}"
        )
    r_primal = inst.Atilde @ svec(X) - inst.bvec
    r_dual = inst.Atilde.T @ np.asarray(y, dtype=float) + svec(Z) - svec(inst.Cmat)
    r_comp = svec(0.5 * (X @ Z + Z @ X))
    return KktResidual(r_primal=r_primal, r_dual=r_dual, r_comp=r_comp)


def jacobian_matrix(Atilde: np.ndarray, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Square Jacobian of the residual w.r.t. (svec X, y, svec Z)."""
    n = X.shape[0]
    t = tau(n)
    m = Atilde.shape[0]
    I_n = np.eye(n)
    J = np.zeros((m + 2 * t, m + 2 * t))
    J[:m, :t] = Atilde
    J[m : m + t, t : t + m] = Atilde.T
    J[m : m + t, t + m :] = np.eye(t)
    J[m + t :, :t] = skron(Z, I_n)
    J[m + t :, t + m :] = skron(I_n, X)
    return J


@dataclass(frozen=True)
class KktJacobian:
    J: np.ndarray
    sigma_min: float
    sigma_max: float

    @property
    def sigma_min_rel(self) -> float:
        if self.sigma_max == 0.0:
            return 0.0
        return self.sigma_min / self.sigma_max

    @property
    def nonsingular(self) -> bool:
        return self.sigma_min_rel >= JACOBIAN_NONSINGULAR_TOL


def jacobian(inst: ProblemInstance, X: np.ndarray, Z: np.ndarray) -> KktJacobian:
    J = jacobian_matrix(inst.Atilde, X, Z)
    s = np.linalg.svd(J, compute_uv=False)
    return KktJacobian(J=J, sigma_min=float(s[-1]), sigma_max=float(s[0]))


def dFdt(inst_prime, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Partial derivative of the residual w.r.t. t at fixed (X, y, Z)."""
    t = tau(X.shape[0])
    top = inst_prime.Atilde_prime @ svec(X) - inst_prime.bprime
    mid = inst_prime.Atilde_prime.T @ np.asarray(y, dtype=float) - svec(inst_prime.Cprime)
    return np.concatenate([top, mid, np.zeros(t)])


# ---------------------------------------------------------------------------
# Regularity certificates


@dataclass(frozen=True)
class RegularityCertificate:
    rank_X: int
    rank_Z: int
    strictly_complementary: bool
    primal_nondegenerate: bool
    dual_nondegenerate: bool
    jacobian_nonsingular: bool
    sigma_min_rel: float
    primal_margin: float  # smallest singular value of the primal rank test
    dual_margin: float  # smallest singular value of the dual rank test

    @property
    def regular(self) -> bool:
        return self.jacobian_nonsingular


def _normalized_rows(mats: list[np.ndarray]) -> np.ndarray:
    rows = []
    for M in mats:
        v = svec(M)
        nrm = np.linalg.norm(v)
        rows.append(v / nrm if nrm > 0 else v)
    return np.vstack(rows) if rows else np.zeros((0, 0))


def certify(
    inst: ProblemInstance,
    X: np.ndarray,
    y: np.ndarray,
    Z: np.ndarray,
    tol: float = DEFAULT_RANK_TOL,
    residual_tol: float = 1e-6,
) -> RegularityCertificate:
    """Rank, complementarity and non-degeneracy tests at a near-optimal point.

    Primal non-degeneracy is tested as span{A_i} intersecting the orthogonal
    complement of the cone tangent space at X only at zero; dual
    non-degeneracy as span{A_i} plus the tangent space at Z filling the whole
    symmetric space.  Both booleans carry the singular-value margin they were
    decided by.
    """
    res = residual(inst, X, y, Z)
    scale = 1.0 + float(np.linalg.norm(inst.bvec)) + float(np.linalg.norm(inst.Cmat))
    if res.norm > residual_tol * scale:
        raise NotNearOptimal(f"residual {res.norm:.3e} exceeds {residual_tol:.1e} * scale")

    n, m = inst.n, inst.m
    edX = eig(X)
    edZ = eig(Z)
    rank_X = rank_from_eigenvalues(edX.lambdas, tol)
    rank_Z = rank_from_eigenvalues(edZ.lambdas, tol)

    A_rows = [inst.Amats[i] for i in range(m)]

    # Primal: complement of the tangent space at X is spanned by pair
    # products of the eigenvectors with (numerically) zero eigenvalue.
    null_idx = list(range(rank_X, n))
    comp_basis = []
    for ia, a in enumerate(null_idx):
        for b_ in null_idx[ia:]:
            B = np.outer(edX.Q[:, a], edX.Q[:, b_])
            B = B + B.T
            comp_basis.append(B / np.linalg.norm(B))
    Mp = _normalized_rows(A_rows + comp_basis)
    want_p = m + tau(n - rank_X)
    sp = np.linalg.svd(Mp, compute_uv=False) if Mp.size else np.array([0.0])
    rank_p = int(np.count_nonzero(sp > tol * max(sp[0], 1.0))) if Mp.size else 0
    primal_nondeg = rank_p == want_p
    primal_margin = float(sp[min(want_p, len(sp)) - 1]) if Mp.size else 0.0

    # Dual: tangent space at Z is spanned by pairs touching the eigen-support.
    supp = list(range(rank_Z))
    tz_basis = []
    for a in range(n):
        for b_ in range(a, n):
            if a in supp or b_ in supp:
                B = np.outer(edZ.Q[:, a], edZ.Q[:, b_])
                B = B + B.T
                tz_basis.append(B / np.linalg.norm(B))
    Md = _normalized_rows(A_rows + tz_basis)
    sd = np.linalg.svd(Md, compute_uv=False) if Md.size else np.array([0.0])
    rank_d = int(np.count_nonzero(sd > tol * max(sd[0], 1.0))) if Md.size else 0
    dual_nondeg = rank_d == tau(n)
    dual_margin = float(sd[min(tau(n), len(sd)) - 1]) if Md.size else 0.0

    jac = jacobian(inst, X, Z)
    return RegularityCertificate(
        rank_X=rank_X,
        rank_Z=rank_Z,
        strictly_complementary=rank_X + rank_Z == n,
        primal_nondegenerate=primal_nondeg,
        dual_nondegenerate=dual_nondeg,
        jacobian_nonsingular=jac.nonsingular,
        sigma_min_rel=jac.sigma_min_rel,
        primal_margin=primal_margin,
        dual_margin=dual_margin,
    )


# ---------------------------------------------------------------------------
# Multi-start enumeration of all zeros of F (PSD constraints dropped)


@dataclass(frozen=True)
class KktRoot:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    f_norm: float
    sigma_min_rel: float
    X_psd: bool
    Z_psd: bool

    def stacked(self) -> np.ndarray:
        return np.concatenate([svec(self.X), self.y, svec(self.Z)])


def _newton_root(inst: ProblemInstance, w0: np.ndarray, max_iter: int = 100) -> Optional[np.ndarray]:
    n, m = inst.n, inst.m
    t = tau(n)

    def unpack(w):
        return smat(w[:t]), w[t : t + m], smat(w[t + m :])

    w = w0.copy()
    X, y, Z = unpack(w)
    F = residual(inst, X, y, Z).stack()
    fn = np.linalg.norm(F)
    for _ in range(max_iter):
        if fn <= 1e-12:
            return w
        J = jacobian_matrix(inst.Atilde, X, Z)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        s = 1.0
        improved = False
        while s >= 1e-6:
            w2 = w + s * step
            X2, y2, Z2 = unpack(w2)
            F2 = residual(inst, X2, y2, Z2).stack()
            fn2 = np.linalg.norm(F2)
            if fn2 < (1.0 - 1e-4 * s) * fn:
                w, X, y, Z, F, fn = w2, X2, y2, Z2, F2, fn2
                improved = True
                break
            s *= 0.5
        if not improved:
            return w if fn <= 1e-12 else None
    return w if fn <= 1e-12 else None


def enumerate_kkt(inst: ProblemInstance, n_starts: int, seed: int) -> list[KktRoot]:
    """Collect zeros of the optimality system from seeded random Newton starts.

    Roots are deduplicated at 1e-6 and reported with their Jacobian margin
    and PSD flags; the count is whatever the starts actually found.
    """
    n, m = inst.n, inst.m
    t = tau(n)
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    for _ in range(n_starts):
        w0 = rng.uniform(-3.0, 3.0, size=2 * t + m)
        w = _newton_root(inst, w0)
        if w is None:
            continue
        if any(np.linalg.norm(w - v) <= 1e-6 * (1.0 + np.linalg.norm(v)) for v in found):
            continue
        found.append(w)
    found.sort(key=lambda v: tuple(np.round(v, 9)))
    roots = []
    for w in found:
        X, y, Z = smat(w[:t]), w[t : t + m], smat(w[t + m :])
        fn = residual(inst, X, y, Z).norm
        jac = jacobian(inst, X, Z)
        roots.append(
            KktRoot(
                X=X,
                y=y,
                Z=Z,
                f_norm=fn,
                sigma_min_rel=jac.sigma_min_rel,
                X_psd=float(np.linalg.eigvalsh(X).min()) >= -1e-8,
                Z_psd=float(np.linalg.eigvalsh(Z).min()) >= -1e-8,
            )
        )
    return roots
