"""Small dense linear-algebra kernels.

Thin wrappers over LAPACK (via :mod:`scipy.linalg`) that add the pivot and
rank checks the operator construction relies on. Problem sizes here are at
most a few hundred unknowns, so everything is dense.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla


class LinalgError(ValueError):
    """Base class for the failures raised by this module."""


class SingularMatrix(LinalgError):
    pass


class RankDeficient(LinalgError):
    pass


class InfeasibleConstraints(LinalgError):
    pass


class NotSymmetric(LinalgError):
    pass


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _scale(A: np.ndarray) -> float:
    return float(np.max(np.abs(A))) if A.size else 0.0


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrix` if a pivot falls below ``1e-13 max|A|``.
    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = _as_matrix(A)
    n, m = A.shape
    if n != m:
        raise ValueError("solve_linear needs a square matrix")
    b = np.asarray(b, dtype=float)
    with warnings.catch_warnings():
        # singularity is reported below with our own tolerance
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if n and pivots.min() <= 1e-13 * _scale(A):
        raise SingularMatrix(f"pivot {pivots.min():.3e} below tolerance")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def numerical_rank(A, rtol: float = 1e-10) -> int:
    A = _as_matrix(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0


def pseudoinverse(A) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a full-rank matrix.

    Uses a column-pivoted QR of ``A`` (tall case) or ``A^T`` (wide case).
    """
    A = _as_matrix(A)
    rows, cols = A.shape
    wide = cols > rows
    M = A.T if wide else A
    # M is tall: M P = Q R with R square upper triangular
    Q, R, perm = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size and (diag[0] == 0 or diag.min() <= 1e-10 * diag[0]):
        raise RankDeficient(
            f"numerical rank below {min(rows, cols)} (|r_kk| ratio {diag.min() / max(diag[0], 1e-300):.2e})")
    # M^+ = P R^{-1} Q^T
    Rinv_Qt = sla.solve_triangular(R, Q.T)
    Mpinv = np.empty_like(Rinv_Qt)
    Mpinv[perm, :] = Rinv_Qt
    return Mpinv.T if wide else Mpinv


def minimum_norm_solve(A, b, rtol: float = 1e-12) -> np.ndarray:
    """Minimum 2-norm least-squares solution of a possibly rank-deficient system.

    Singular values below ``rtol * sigma_max`` are discarded.
    """
    A = _as_matrix(A)
    x, *_ = np.linalg.lstsq(A, np.asarray(b, dtype=float), rcond=rtol)
    return x


def independent_rows(C, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``C``."""
    C = _as_matrix(C)
    if C.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, perm = sla.qr(C.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rtol * diag[0]))
    return np.sort(perm[:rank])


def solve_equality_constrained_ls(A, b, C, d) -> np.ndarray:
    """Minimize ``||A x - b||_2`` subject to ``C x = d``.

    The KKT system is assembled and solved with :func:`solve_linear`.
    Redundant constraint rows are dropped first, after checking that ``d``
    is consistent with them; otherwise :class:`InfeasibleConstraints`.
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    C = np.asarray(C, dtype=float).reshape(-1, n)
    d = np.asarray(d, dtype=float).reshape(-1)
    if C.shape[0] == 0:
        return minimum_norm_solve(A, b)

    keep = independent_rows(C)
    if keep.size < C.shape[0]:
        # the dropped rows must be combinations of the kept ones, with d to match
        Ck, dk = C[keep], d[keep]
        coef = np.linalg.lstsq(Ck.T, C.T, rcond=None)[0]
        scale = max(_scale(C) * 1.0, np.max(np.abs(d), initial=0.0), 1.0)
        if np.max(np.abs(coef.T @ dk - d), initial=0.0) > 1e-9 * scale * max(1, len(d)):
            raise InfeasibleConstraints("rank-deficient constraints with incompatible data")
        C, d = Ck, dk

    m = C.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = A.T @ A
    K[:n, n:] = C.T
    K[n:, :n] = C
    rhs = np.concatenate([A.T @ b, d])
    try:
        sol = solve_linear(K, rhs)
    except SingularMatrix as exc:
        raise InfeasibleConstraints(str(exc)) from exc
    return sol[:n]


def symmetric_eigenvalues(A) -> np.ndarray:
    """Eigenvalues of a symmetric matrix in nondecreasing order."""
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise NotSymmetric("matrix is not square")
    normA = np.max(np.abs(A).sum(axis=1), initial=0.0)
    asym = np.max(np.abs(A - A.T).sum(axis=1), initial=0.0)
    if asym > 1e-12 * normA:
        raise NotSymmetric(f"||A - A^T|| = {asym:.3e}")
    return np.linalg.eigvalsh(0.5 * (A + A.T))


def min_symmetric_part_eigenvalue(A) -> float:
    """Smallest eigenvalue of ``(A + A^T)/2``; ``x^T A x >= 0`` iff this is >= 0."""
    A = _as_matrix(A)
    return float(symmetric_eigenvalues(0.5 * (A + A.T))[0])
