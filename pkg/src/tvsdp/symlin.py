"""Dense symmetric-matrix linear algebra.

Everything downstream (solver, Jacobians, certificates) works in the
isometric vectorization of the space of real symmetric n x n matrices:
``svec`` stacks the upper triangle row by row with off-diagonal entries
scaled by sqrt(2), so that the Frobenius inner product of matrices equals
the Euclidean inner product of their svec images.  The symmetric Kronecker
product is the matrix representation of H -> (A H B' + B H A')/2 in svec
coordinates.

Matrices are plain ``numpy`` arrays; all functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT2 = float(np.sqrt(2.0))

DEFAULT_RANK_TOL = 1e-7


class LengthNotTriangular(ValueError):
    """Vector length is not n(n+1)/2 for any integer n >= 1."""


class DimensionMismatch(ValueError):
    """Operands do not have compatible shapes."""


class ConvergenceFailure(RuntimeError):
    """The eigenvalue iteration did not converge (ill-conditioned input)."""


def tau(n: int) -> int:
    """Length of the svec image of an n x n symmetric matrix."""
    return n * (n + 1) // 2


def dim_from_tau(length: int) -> int:
    """Inverse of :func:`tau`; raises LengthNotTriangular if not a triangular number."""
    n = int((np.sqrt(8 * length + 1) - 1) / 2 + 0.5)
    if n < 1 or tau(n) != length:
        raise LengthNotTriangular(f"no integer n with n(n+1)/2 == {length}")
    return n


@lru_cache(maxsize=None)
def _svec_index(n: int):
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, weights


def symmetrize(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def check_symmetric(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate (and return) a square symmetric array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise DimensionMismatch("matrix is not symmetric")
    return M


def svec(M: np.ndarray) -> np.ndarray:
    """Row-major upper-triangle stacking with sqrt(2)-scaled off-diagonals.

    Preserves inner products: <A, B>_F == svec(A) @ svec(B).
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    rows, cols, weights = _svec_index(n)
    return M[rows, cols] * weights


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float).ravel()
    n = dim_from_tau(v.size)
    rows, cols, weights = _svec_index(n)
    M = np.zeros((n, n))
    vals = v / weights
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def skron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Symmetric Kronecker product as a tau(n) x tau(n) matrix.

    Defined by skron(A, B) @ svec(H) == svec((A H B' + B H A')/2) for every
    symmetric H; symmetric in (A, B) by construction.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {A.shape} and {B.shape}")
    n = A.shape[0]
    t = tau(n)
    rows, cols, weights = _svec_index(n)
    out = np.empty((t, t))
    for k in range(t):
        H = np.zeros((n, n))
        val = 1.0 / weights[k]
        H[rows[k], cols[k]] = val
        H[cols[k], rows[k]] = val
        P = A @ H @ B.T
        out[:, k] = svec(0.5 * (P + P.T))
    return out


@dataclass(frozen=True)
class EigDecomp:
    """Orthogonal eigendecomposition with eigenvalues sorted descending."""

    Q: np.ndarray
    lambdas: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.lambdas) @ self.Q.T


def eig(M: np.ndarray) -> EigDecomp:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    M = check_symmetric(M, tol=1e-9)
    try:
        w, Q = np.linalg.eigh(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(w)[::-1]
    return EigDecomp(Q=Q[:, order], lambdas=w[order])


def numerical_rank(M: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL) -> int:
    """Count of singular values above tol_rel times the largest one."""
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol_rel * s[0]))


def rank_from_eigenvalues(lambdas: np.ndarray, tol_rel: float = DEFAULT_RANK_TOL) -> int:
    """Rank of a (near-)PSD matrix from its eigenvalues."""
    lam = np.abs(np.asarray(lambdas, dtype=float))
    top = lam.max(initial=0.0)
    if top == 0.0:
        return 0
    return int(np.count_nonzero(lam > tol_rel * top))


def min_eigenvalue(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M)).min())
