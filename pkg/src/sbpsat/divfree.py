"""Projection of an analytic velocity onto a discretely divergence-free field.

Two stages:

1. Face-normal velocities.  Each shared face node carries one unknown
   ``lambda_n`` (left-element convention; the right element sees the
   negative, rescaled by the face weights).  The sum ``sum b lambda_n`` over
   each element's faces must vanish; the unknowns are the closest such values
   to the analytic ones in the plain Euclidean norm.
2. Volume velocities.  Per element, ``(Lambda_xi, Lambda_eta)`` are the
   closest values to the analytic ones such that
   ``Q_xi^T lam_xi + Q_eta^T lam_eta = sum_j R_j^T B_j lambda_n,j``,
   which is the SBP-discrete divergence-free condition multiplied through by H.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sbpsat.linalg import InfeasibleConstraints, solve_equality_constrained_ls
from sbpsat.mesh import CurvedMesh
from sbpsat.operators import SbpOperatorSet


@dataclass
class DiscreteVelocityField:
    lam: np.ndarray  # (E, n, 2) reference-element components at volume nodes
    face_lam_n: np.ndarray  # (E, 3, nu) outward normal velocity at each element's face nodes
    lam_hat: np.ndarray | None = None  # analytic values before projection
    face_hat: np.ndarray | None = None

    @property
    def lam_xi(self) -> np.ndarray:
        return self.lam[..., 0]

    @property
    def lam_eta(self) -> np.ndarray:
        return self.lam[..., 1]

    def b_lambda(self, B: np.ndarray) -> np.ndarray:
        """``B_lambda`` diagonals of every element face, ``(E, 3, nu)``."""
        return B[None, :, :] * self.face_lam_n

    def to_csv(self, path, mesh: CurvedMesh) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "node", "x", "y", "lam_xi", "lam_eta"])
            for e in range(self.lam.shape[0]):
                for i in range(self.lam.shape[1]):
                    w.writerow([e, i, repr(float(mesh.xy[e, i, 0])), repr(float(mesh.xy[e, i, 1])),
                                repr(float(self.lam[e, i, 0])), repr(float(self.lam[e, i, 1]))])


def analytic_field(mesh: CurvedMesh, velocity: Callable) -> DiscreteVelocityField:
    """Analytic velocity transformed to element coordinates, without projection."""
    lx, ly = velocity(mesh.xy[..., 0], mesh.xy[..., 1])
    lam = mesh.contravariant(np.stack([lx, ly], axis=-1))
    face = mesh.face_normal_velocity(velocity)
    return DiscreteVelocityField(lam, face, lam.copy(), face.copy())


def flux_constraints(mesh: CurvedMesh) -> sp.csr_matrix:
    """Sparse matrix mapping shared-face unknowns to per-element net fluxes."""
    E = mesh.num_elements
    nu = mesh.face_b.shape[1]
    rows, cols, vals = [], [], []
    for k, c in enumerate(mesh.couplings):
        (el, fl), (er, _) = c.left, c.right
        b = mesh.face_b[fl]
        idx = k * nu + np.arange(nu)
        rows += [el] * nu + [er] * nu
        cols += list(idx) * 2
        vals += list(b) + list(-b)
    return sp.csr_matrix((vals, (rows, cols)), shape=(E, len(mesh.couplings) * nu))


def project_onto_constraints(C, x_hat: np.ndarray) -> np.ndarray:
    """Closest point to ``x_hat`` with ``C x = 0``, for ``C`` whose rows sum to zero.

    Uses ``x = x_hat - C^T mu`` with ``(C C^T) mu = C x_hat``.  ``C C^T`` is
    singular along the constant vector, so the first multiplier is pinned.
    """
    C = sp.csr_matrix(C)
    rhs = C @ x_hat
    m = C.shape[0]
    if m == 1:
        cc = (C @ C.T).toarray()[0, 0]
        mu = np.array([rhs[0] / cc])
    else:
        ones = np.ones(m)
        if abs(ones @ rhs) > 1e-10 * max(1.0, np.abs(rhs).sum()):
            # constraint rows do not sum to zero: ordinary full-rank solve
            mu = spla.spsolve((C @ C.T).tocsc(), rhs)
        else:
            G = (C @ C.T).tocsc()[1:, 1:]
            mu = np.concatenate([[0.0], spla.spsolve(G, rhs[1:])])
    return x_hat - C.T @ mu


def project_face_normals(mesh: CurvedMesh, velocity: Callable) -> np.ndarray:
    """Projected outward face-normal velocities ``(E, 3, nu)``."""
    if not mesh.couplings:
        raise InfeasibleConstraints("mesh has no face pairing")
    hat = mesh.face_normal_velocity(velocity)
    nu = hat.shape[2]
    x_hat = np.concatenate([hat[c.left[0], c.left[1]] for c in mesh.couplings])
    C = flux_constraints(mesh)
    x = project_onto_constraints(C, x_hat)
    resid = np.max(np.abs(C @ x))
    if not np.isfinite(resid) or resid > 1e-10 * max(1.0, np.max(np.abs(x_hat))):
        raise InfeasibleConstraints(f"face-flux constraints violated by {resid:.3e}")
    out = np.empty_like(hat)
    for k, c in enumerate(mesh.couplings):
        (el, fl), (er, fr) = c.left, c.right
        xl = x[k * nu:(k + 1) * nu]
        out[el, fl] = xl
        out[er, fr, c.perm] = -mesh.face_b[fl] * xl / mesh.face_b[fr][c.perm]
    return out


def divergence_constraint(ops: SbpOperatorSet) -> np.ndarray:
    """``[Q_xi^T, Q_eta^T]``, acting on ``[lam_xi; lam_eta]``."""
    return np.hstack([ops.Qxi.T, ops.Qeta.T])


def face_flux_source(ops: SbpOperatorSet, face_lam_n: np.ndarray) -> np.ndarray:
    """``sum_j R_j^T B_j lambda_n,j`` for one element (or a stack of them)."""
    bl = ops.B * face_lam_n  # (..., 3, nu)
    return np.einsum("jvn,...jv->...n", ops.R, bl)


def project_volume_velocities(ops: SbpOperatorSet, face_lam_n: np.ndarray,
                              lam_hat: np.ndarray, C: np.ndarray | None = None) -> np.ndarray:
    """Closest ``(n, 2)`` velocities to ``lam_hat`` satisfying the discrete divergence condition."""
    n = ops.n
    C = divergence_constraint(ops) if C is None else C
    d = face_flux_source(ops, face_lam_n)
    x_hat = np.concatenate([lam_hat[:, 0], lam_hat[:, 1]])
    x = solve_equality_constrained_ls(np.eye(2 * n), x_hat, C, d)
    return np.column_stack([x[:n], x[n:]])


def project_field(mesh: CurvedMesh, ops: SbpOperatorSet, velocity: Callable) -> DiscreteVelocityField:
    """Both projection stages for every element."""
    raw = analytic_field(mesh, velocity)
    face = project_face_normals(mesh, velocity)
    C = divergence_constraint(ops)
    lam = np.empty_like(raw.lam)
    for e in range(mesh.num_elements):
        lam[e] = project_volume_velocities(ops, face[e], raw.lam[e], C)
    return DiscreteVelocityField(lam, face, raw.lam_hat, raw.face_hat)


@dataclass(frozen=True)
class DivergenceReport:
    max_divergence_residual: float
    max_flux_residual: float
    scale: float

    def passed(self, tol: float = 1e-9) -> bool:
        return max(self.max_divergence_residual, self.max_flux_residual) <= tol * self.scale


def divergence_residuals(field: DiscreteVelocityField, ops: SbpOperatorSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-element residuals of the discrete divergence condition and of the net face flux.

    The divergence residual is measured in the ``H^{-1}`` (pointwise) form
    ``(D_xi Lam_xi + D_eta Lam_eta) 1 - H^{-1} sum_j (R_j^T B_j R_j Lam_j - R_j^T B_lam,j R_j) 1``.
    """
    lx, ly = field.lam_xi, field.lam_eta
    lhs = lx @ ops.Dxi.T + ly @ ops.Deta.T
    rhs = np.zeros_like(lx)
    for j in range(3):
        term = ops.face_term(j)
        lam_j = ops.normals[j, 0] * lx + ops.normals[j, 1] * ly
        rhs += (lam_j @ term.T)
    rhs -= face_flux_source(ops, field.face_lam_n)
    div = np.max(np.abs(lhs - rhs / ops.H[None, :]), axis=1)
    flux = np.abs(np.einsum("jv,ejv->e", ops.B, field.face_lam_n))
    return div, flux


def verify_divergence_free(field: DiscreteVelocityField, mesh: CurvedMesh,
                           ops: SbpOperatorSet) -> DivergenceReport:
    div, flux = divergence_residuals(field, ops)
    ref = field.lam_hat if field.lam_hat is not None else field.lam
    scale = max(1.0, float(np.max(np.abs(ref), initial=0.0)))
    return DivergenceReport(float(np.max(div, initial=0.0)), float(np.max(flux, initial=0.0)), scale)


def identity_residual(ops: SbpOperatorSet, lam: np.ndarray, face_lam_n: np.ndarray, v: np.ndarray) -> float:
    """``1^T (Lam_xi Q_xi + Lam_eta Q_eta) v - sum_j 1^T B_lam,j R_j v`` for one element."""
    lhs = lam[:, 0] @ (ops.Qxi @ v) + lam[:, 1] @ (ops.Qeta @ v)
    rhs = sum((ops.B[j] * face_lam_n[j]) @ (ops.R[j] @ v) for j in range(3))
    return float(abs(lhs - rhs))


def velocity_error(field: DiscreteVelocityField, mesh: CurvedMesh, ops: SbpOperatorSet) -> float:
    """Relative ``H J``-weighted difference between projected and analytic velocities."""
    if field.lam_hat is None:
        return 0.0
    w = (ops.H[None, :] / mesh.J)[..., None]  # components scale with J; compare in physical units
    num = np.sum(w * (field.lam - field.lam_hat) ** 2)
    den = np.sum(w * field.lam_hat ** 2)
    return float(np.sqrt(num / den)) if den > 0 else 0.0
