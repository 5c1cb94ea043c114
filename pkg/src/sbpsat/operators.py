"""Diagonal-norm SBP first-derivative operators on the reference triangle.

Each operator set bundles the norm ``H``, the per-face extrapolation
operators ``R_j`` with face weights ``B_j``, the boundary matrices
``E = sum_j n_j R_j^T B_j R_j``, the skew-symmetric ``S`` (minimum-norm
solution of the accuracy conditions) and ``D = H^{-1}(S + E/2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from sbpsat import cubature
from sbpsat.cubature import FACE_NORMALS, face_node_indices, face_rule, volume_cubature
from sbpsat.linalg import minimum_norm_solve, numerical_rank, pseudoinverse
from sbpsat.polybasis import monomial_exponents, monomial_vandermonde, num_basis, orthonormal_vandermonde


class Inconsistent(RuntimeError):
    """The accuracy conditions admit no skew-symmetric solution."""


@dataclass(frozen=True, eq=False)
class SbpOperatorSet:
    family: str
    p: int
    nodes: np.ndarray  # (n, 2)
    H: np.ndarray  # (n,) diagonal of the norm
    Sxi: np.ndarray
    Seta: np.ndarray
    R: np.ndarray  # (3, nu, n) zero-padded extrapolation per face
    B: np.ndarray  # (3, nu) face weights (reference arclength)
    face_nodes: np.ndarray  # (3, nu, 2)
    normals: np.ndarray = field(default_factory=lambda: FACE_NORMALS.copy())
    # SBP-Gamma only: compact (nu, p+1) extrapolation and its volume-node map
    R_compact: tuple[np.ndarray, ...] | None = None
    face_index: tuple[np.ndarray, ...] | None = None
    nullspace_dim: int = 0

    @property
    def n(self) -> int:
        return len(self.H)

    @property
    def nu(self) -> int:
        return self.R.shape[1]

    def face_term(self, j: int) -> np.ndarray:
        return self.R[j].T @ (self.B[j][:, None] * self.R[j])

    @property
    def Exi(self) -> np.ndarray:
        return sum(self.normals[j, 0] * self.face_term(j) for j in range(3))

    @property
    def Eeta(self) -> np.ndarray:
        return sum(self.normals[j, 1] * self.face_term(j) for j in range(3))

    @property
    def Qxi(self) -> np.ndarray:
        return self.Sxi + 0.5 * self.Exi

    @property
    def Qeta(self) -> np.ndarray:
        return self.Seta + 0.5 * self.Eeta

    @property
    def Dxi(self) -> np.ndarray:
        return self.Qxi / self.H[:, None]

    @property
    def Deta(self) -> np.ndarray:
        return self.Qeta / self.H[:, None]

    def extrapolation_size(self, j: int = 0) -> tuple[int, int]:
        """Stored size of ``R_j`` (compact for SBP-Gamma)."""
        if self.R_compact is not None:
            return self.R_compact[j].shape
        return self.R[j].shape

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "p": self.p,
            "nodes": self.nodes.tolist(),
            "H": self.H.tolist(),
            "Sxi": self.Sxi.tolist(),
            "Seta": self.Seta.tolist(),
            "R": [r.tolist() for r in self.R],
            "B": self.B.tolist(),
            "face_nodes": self.face_nodes.tolist(),
            "normals": self.normals.tolist(),
        }

    def save_json(self, path) -> None:
        # json writes floats with repr(), which round-trips exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, data: dict) -> "SbpOperatorSet":
        arr = lambda key: np.array(data[key], dtype=float)  # noqa: E731
        return cls(
            family=data["family"], p=int(data["p"]), nodes=arr("nodes"), H=arr("H"),
            Sxi=arr("Sxi"), Seta=arr("Seta"), R=arr("R"), B=arr("B"),
            face_nodes=arr("face_nodes"), normals=arr("normals"),
        )

    @classmethod
    def load_json(cls, path) -> "SbpOperatorSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_extrapolation(family: str, p: int, face: int,
                        rule: cubature.CubatureRule | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Extrapolation from volume nodes to the face-cubature nodes of ``face``.

    Returns ``(R, index)``.  For SBP-Omega ``R`` is ``nu x n`` and ``index`` is
    None; for SBP-Gamma ``R`` is ``nu x (p+1)`` acting on the volume nodes
    ``index`` that lie on the face.
    """
    family = cubature.normalize_family(family)
    rule = rule or volume_cubature(family, p)
    frule = face_rule(p, face)
    Vface = orthonormal_vandermonde(p, frule.nodes).values
    if family == "omega":
        Vvol = orthonormal_vandermonde(p, rule.nodes).values
        return Vface @ pseudoinverse(Vvol), None
    index = face_node_indices(rule, face)
    if len(index) != p + 1:
        raise ValueError(f"expected {p + 1} volume nodes on face {face}, found {len(index)}")
    Vvol = orthonormal_vandermonde(p, rule.nodes[index]).values
    return Vface @ pseudoinverse(Vvol), index


def build_E(R: np.ndarray, B: np.ndarray, normals: np.ndarray = FACE_NORMALS) -> tuple[np.ndarray, np.ndarray]:
    """Boundary matrices assembled face by face from ``R_j^T B_j R_j``."""
    terms = [R[j].T @ (B[j][:, None] * R[j]) for j in range(len(R))]
    Exi = sum(normals[j, 0] * terms[j] for j in range(len(R)))
    Eeta = sum(normals[j, 1] * terms[j] for j in range(len(R)))
    return Exi, Eeta


def _skew_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def _skew_from_upper(n: int, s: np.ndarray) -> np.ndarray:
    iu = _skew_basis(n)
    S = np.zeros((n, n))
    S[iu] = s
    return S - S.T


def build_S(H: np.ndarray, E: np.ndarray, V: np.ndarray, Vd: np.ndarray,
            tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Minimum-norm skew-symmetric ``S`` with ``H^{-1}(S + E/2) V = Vd``.

    ``V``/``Vd`` hold a degree-p basis and its derivative at the nodes.
    Returns ``S`` and the dimension of the skew-symmetric solution space.
    """
    n = len(H)
    rhs = H[:, None] * Vd - 0.5 * E @ V  # S V = rhs
    iu, ju = _skew_basis(n)
    m = V.shape[1]
    # (S V)[a, c] = sum_{b>a} s_ab V[b, c] - sum_{b<a} s_ba V[b, c]
    A = np.zeros((n * m, len(iu)))
    for col, (a, b) in enumerate(zip(iu, ju)):
        A[a * m:(a + 1) * m, col] += V[b]
        A[b * m:(b + 1) * m, col] -= V[a]
    s = minimum_norm_solve(A, rhs.ravel())
    resid = np.max(np.abs(A @ s - rhs.ravel()))
    if resid > tol * max(1.0, np.max(np.abs(rhs))):
        raise Inconsistent(f"accuracy residual {resid:.3e}: no skew-symmetric solution")
    nullity = len(iu) - numerical_rank(A)
    return _skew_from_upper(n, s), nullity


@lru_cache(maxsize=None)
def build_operator(family: str, p: int) -> SbpOperatorSet:
    """Construct (and cache) the SBP operator set of the given family and degree."""
    family = cubature.normalize_family(family)
    rule = volume_cubature(family, p)
    n = rule.num_nodes
    nu = p + 1
    R = np.zeros((3, nu, n))
    B = np.zeros((3, nu))
    fnodes = np.zeros((3, nu, 2))
    compact, index = [], []
    for j in range(3):
        frule = face_rule(p, j)
        Rj, idx = build_extrapolation(family, p, j, rule)
        if idx is None:
            R[j] = Rj
        else:
            R[j][:, idx] = Rj
            compact.append(Rj)
            index.append(idx)
        B[j] = frule.weights
        fnodes[j] = frule.nodes

    Exi, Eeta = build_E(R, B)
    basis = orthonormal_vandermonde(p, rule.nodes)
    Sxi, null_xi = build_S(rule.weights, Exi, basis.values, basis.dxi)
    Seta, null_eta = build_S(rule.weights, Eeta, basis.values, basis.deta)
    return SbpOperatorSet(
        family=family, p=p, nodes=rule.nodes, H=rule.weights.copy(),
        Sxi=Sxi, Seta=Seta, R=R, B=B, face_nodes=fnodes,
        R_compact=tuple(compact) if compact else None,
        face_index=tuple(index) if index else None,
        nullspace_dim=max(null_xi, null_eta),
    )


def boundary_moment(a: int, b: int, direction: int) -> Fraction:
    """Closed-form ``oint xi^a eta^b n_dir dGamma`` over the reference triangle boundary.

    On the hypotenuse ``n ds = (1, 1) dt``; the legs contribute only for a
    zero exponent of the coordinate that vanishes on them.
    """
    hyp = Fraction(math.factorial(a) * math.factorial(b), math.factorial(a + b + 1))
    if direction == 0:
        leg = Fraction(1, b + 1) if a == 0 else Fraction(0)
    else:
        leg = Fraction(1, a + 1) if b == 0 else Fraction(0)
    return hyp - leg


@dataclass
class OperatorReport:
    family: str
    p: int
    accuracy: float
    h_min: float
    weight_sum_error: float
    skew: float
    e_accuracy: float
    decomposition: float
    compatibility: float
    extrapolation: float
    nullspace_dim: int
    sharpness: float
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return (self.h_min > 0 and max(self.accuracy, self.skew, self.e_accuracy,
                                       self.decomposition, self.compatibility,
                                       self.extrapolation) <= self.tolerance)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def certify_operator(ops: SbpOperatorSet) -> OperatorReport:
    """Residuals of the SBP properties and the face decomposition of ``E``."""
    p = ops.p
    mono = monomial_vandermonde(p, ops.nodes)
    Dxi, Deta = ops.Dxi, ops.Deta
    accuracy = max(np.max(np.abs(Dxi @ mono.values - mono.dxi)),
                   np.max(np.abs(Deta @ mono.values - mono.deta)))

    skew = max(np.max(np.abs(ops.Sxi + ops.Sxi.T)), np.max(np.abs(ops.Seta + ops.Seta.T)))

    exps = monomial_exponents(p)
    e_acc = 0.0
    for direction, E in ((0, ops.Exi), (1, ops.Eeta)):
        got = mono.values.T @ E @ mono.values
        for k, (ak, bk) in enumerate(exps):
            for m, (am, bm) in enumerate(exps):
                exact = float(boundary_moment(ak + am, bk + bm, direction))
                e_acc = max(e_acc, abs(got[k, m] - exact))

    Exi_sum, Eeta_sum = build_E(ops.R, ops.B, ops.normals)
    decomposition = max(np.max(np.abs(Exi_sum - ops.Exi)), np.max(np.abs(Eeta_sum - ops.Eeta)))

    Hm = ops.H[:, None]
    compat = 0.0
    for E, Vd in ((ops.Exi, mono.dxi), (ops.Eeta, mono.deta)):
        lhs = mono.values.T @ (Hm * Vd) + Vd.T @ (Hm * mono.values)
        compat = max(compat, np.max(np.abs(lhs - mono.values.T @ E @ mono.values)))

    extrap = 0.0
    for j in range(3):
        fm = monomial_vandermonde(p, ops.face_nodes[j]).values
        extrap = max(extrap, np.max(np.abs(ops.R[j] @ mono.values - fm)))

    # degree p+1 residual, expected nonzero for a degree-p operator
    hi = [(i, p + 1 - i) for i in range(p + 2)]
    x, y = ops.nodes[:, 0], ops.nodes[:, 1]
    sharp = 0.0
    for a, b in hi:
        f = x**a * y**b
        fx = a * x ** max(a - 1, 0) * y**b if a else np.zeros_like(x)
        sharp = max(sharp, np.max(np.abs(Dxi @ f - fx)))

    return OperatorReport(
        family=ops.family, p=p, accuracy=float(accuracy), h_min=float(ops.H.min()),
        weight_sum_error=float(abs(ops.H.sum() - cubature.REFERENCE_AREA)),
        skew=float(skew), e_accuracy=float(e_acc), decomposition=float(decomposition),
        compatibility=float(compat), extrapolation=float(extrap),
        nullspace_dim=ops.nullspace_dim, sharpness=float(sharp),
    )


def all_operators() -> list[SbpOperatorSet]:
    return [build_operator(f, p) for f in cubature.FAMILIES for p in cubature.DEGREES]


def num_monomials(p: int) -> int:
    return num_basis(p)
