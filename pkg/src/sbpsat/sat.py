"""Interface coupling terms (SATs) between two SBP elements.

For a shared face the coupling is described by four matrices ``M_LL, M_LR,
M_RR, M_RL``; the left element receives ``(1/2) H_L^{-1} (M_LL u_L - M_LR u_R)``
and the right one ``(1/2) H_R^{-1} (M_RR u_R - M_RL u_L)``.  Right-face
quantities are reordered into the left face-node order before use.

``Lam`` arguments are pairs ``(lam_xi, lam_eta)`` of volume-node diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sbpsat.linalg import min_symmetric_part_eigenvalue
from sbpsat.mesh import FaceCoupling
from sbpsat.operators import SbpOperatorSet

SYMMETRIC = "symmetric"
UPWIND = "upwind"
VARIANTS = (SYMMETRIC, UPWIND)


class InconsistentNormals(ValueError):
    pass


@dataclass(frozen=True)
class SatMatrices:
    M_LL: np.ndarray
    M_LR: np.ndarray
    M_RR: np.ndarray
    M_RL: np.ndarray
    variant: str

    def sat_left(self, H_L, u_L, u_R) -> np.ndarray:
        return 0.5 * (self.M_LL @ u_L - self.M_LR @ u_R) / H_L

    def sat_right(self, H_R, u_L, u_R) -> np.ndarray:
        return 0.5 * (self.M_RR @ u_R - self.M_RL @ u_L) / H_R


@dataclass(frozen=True)
class FaceSide:
    """Operators seen from one side of a face, rows in left face-node order."""

    R: np.ndarray  # (nu, n)
    B: np.ndarray  # (nu,)
    normal: np.ndarray  # (2,)

    def lam_face(self, Lam) -> np.ndarray:
        """Normal combination ``n_xi Lam_xi + n_eta Lam_eta`` as a volume diagonal."""
        return self.normal[0] * np.asarray(Lam[0]) + self.normal[1] * np.asarray(Lam[1])

    def boundary_term(self, Lam) -> np.ndarray:
        """``R^T B R Lambda`` for this face."""
        return self.R.T @ (self.B[:, None] * self.R) * self.lam_face(Lam)[None, :]


def face_sides(coupling: FaceCoupling, ops_L: SbpOperatorSet,
               ops_R: SbpOperatorSet | None = None) -> tuple[FaceSide, FaceSide]:
    ops_R = ops_R or ops_L
    (_, fl), (_, fr) = coupling.left, coupling.right
    perm = np.asarray(coupling.perm)
    left = FaceSide(ops_L.R[fl], ops_L.B[fl], ops_L.normals[fl])
    right = FaceSide(ops_R.R[fr][perm], ops_R.B[fr][perm], ops_R.normals[fr])
    return left, right


def build_b_lambda(coupling: FaceCoupling, B_L: np.ndarray, lam_n_L: np.ndarray,
                   B_R: np.ndarray | None = None, lam_n_R: np.ndarray | None = None,
                   tol: float = 1e-10) -> np.ndarray:
    """Diagonal of ``B_Lambda = B_L diag(lambda_n,L)``.

    When the right-side data (in right face-node order) is given, checks that
    ``b_L lambda_n,L = -b_R lambda_n,R`` at matched nodes.
    """
    b_lam = np.asarray(B_L) * np.asarray(lam_n_L)
    if lam_n_R is not None:
        B_R = np.asarray(B_L if B_R is None else B_R)
        perm = np.asarray(coupling.perm)
        other = B_R[perm] * np.asarray(lam_n_R)[perm]
        scale = max(1.0, float(np.max(np.abs(lam_n_L))))
        resid = float(np.max(np.abs(b_lam + other)))
        if resid > tol * scale:
            raise InconsistentNormals(f"face-normal velocities disagree by {resid:.3e}")
    coupling.b_lambda = b_lam
    return b_lam


def symmetric_sat(left: FaceSide, right: FaceSide, Lam_L, Lam_R, b_lambda) -> SatMatrices:
    bl = np.asarray(b_lambda)
    return SatMatrices(
        M_LL=left.boundary_term(Lam_L),
        M_LR=left.R.T @ (bl[:, None] * right.R),
        M_RR=right.boundary_term(Lam_R),
        M_RL=-right.R.T @ (bl[:, None] * left.R),
        variant=SYMMETRIC,
    )


def upwind_sat(left: FaceSide, right: FaceSide, Lam_L, Lam_R, b_lambda) -> SatMatrices:
    bl = np.asarray(b_lambda)
    ab = np.abs(bl)
    return SatMatrices(
        M_LL=left.boundary_term(Lam_L) - left.R.T @ (ab[:, None] * left.R),
        M_LR=left.R.T @ ((bl - ab)[:, None] * right.R),
        M_RR=right.boundary_term(Lam_R) - right.R.T @ (ab[:, None] * right.R),
        M_RL=-right.R.T @ ((bl + ab)[:, None] * left.R),
        variant=UPWIND,
    )


def build_sat(variant: str, left: FaceSide, right: FaceSide, Lam_L, Lam_R, b_lambda) -> SatMatrices:
    if variant == SYMMETRIC:
        return symmetric_sat(left, right, Lam_L, Lam_R, b_lambda)
    if variant == UPWIND:
        return upwind_sat(left, right, Lam_L, Lam_R, b_lambda)
    raise ValueError(f"unknown SAT variant {variant!r}")


def stability_matrix(sat: SatMatrices, left: FaceSide, right: FaceSide, Lam_L, Lam_R) -> np.ndarray:
    """Block matrix that must be positive semi-definite for energy stability."""
    return np.block([
        [left.boundary_term(Lam_L) - sat.M_LL, sat.M_LR],
        [sat.M_RL, right.boundary_term(Lam_R) - sat.M_RR],
    ])


@dataclass(frozen=True)
class ConditionReport:
    min_eigenvalue: float
    conservation_residual: float
    accuracy_residual: float | None
    scale: float

    def stable(self, tol: float = 1e-12) -> bool:
        return self.min_eigenvalue >= -tol * self.scale


def check_conditions(variant: str, left: FaceSide, right: FaceSide, Lam_L, Lam_R, b_lambda,
                     u_L, u_R, H_L=None, H_R=None) -> ConditionReport:
    """Stability eigenvalue, face-local conservation residual and SAT magnitude.

    The conservation residual is that of
    ``1^T B_Lambda (R_L u_L - R_R u_R) = (R_L Lam_L 1)^T B_L R_L u_L + (R_R Lam_R 1)^T B_R R_R u_R``.
    The accuracy entry is ``max |SAT|`` over both sides for the given states
    (it vanishes when the states carry a common polynomial face-normal flux).
    """
    sat = build_sat(variant, left, right, Lam_L, Lam_R, b_lambda)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([np.ravel(Lam_L), np.ravel(Lam_R)])))))
    eig = min_symmetric_part_eigenvalue(stability_matrix(sat, left, right, Lam_L, Lam_R))
    bl = np.asarray(b_lambda)
    lhs = bl @ (left.R @ u_L - right.R @ u_R)
    rhs = (left.R @ left.lam_face(Lam_L)) @ (left.B * (left.R @ u_L)) \
        + (right.R @ right.lam_face(Lam_R)) @ (right.B * (right.R @ u_R))
    acc = None
    if H_L is not None:
        H_R = H_L if H_R is None else H_R
        acc = max(float(np.max(np.abs(sat.sat_left(H_L, u_L, u_R)))),
                  float(np.max(np.abs(sat.sat_right(H_R, u_L, u_R)))))
    return ConditionReport(float(eig), float(abs(lhs - rhs)), acc, scale)
