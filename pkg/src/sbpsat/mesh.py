"""Periodic triangulations of the unit square with an analytic curvilinear map.

Elements live in computational coordinates ``(xi, eta)`` in [0, 1]^2; each is
an affine image of the reference triangle, and the global mapping
``(x(xi, eta), y(xi, eta))`` sends nodes to physical space.  Per-element
metric terms are computed from the exact derivatives of the composed map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from sbpsat.operators import SbpOperatorSet

MATCH_TOL = 1e-10
NORMAL_TOL = 1e-12


class NegativeJacobian(ValueError):
    pass


class UnmatchedFace(RuntimeError):
    pass


@dataclass(frozen=True)
class MappingSpec:
    """Analytic map of the unit square and its four partial derivatives."""

    name: str
    x: Callable
    y: Callable
    x_xi: Callable
    x_eta: Callable
    y_xi: Callable
    y_eta: Callable

    def __call__(self, xi, eta) -> tuple[np.ndarray, np.ndarray]:
        return self.x(xi, eta), self.y(xi, eta)

    def jacobian(self, xi, eta) -> np.ndarray:
        """Array ``[..., 2, 2]`` of ``[[x_xi, x_eta], [y_xi, y_eta]]``."""
        g = np.empty(np.shape(xi) + (2, 2))
        g[..., 0, 0] = self.x_xi(xi, eta)
        g[..., 0, 1] = self.x_eta(xi, eta)
        g[..., 1, 0] = self.y_xi(xi, eta)
        g[..., 1, 1] = self.y_eta(xi, eta)
        return g


def _ones(xi, eta):
    return np.ones_like(np.asarray(xi, dtype=float))


def _zeros(xi, eta):
    return np.zeros_like(np.asarray(xi, dtype=float))


IDENTITY = MappingSpec("identity", lambda xi, eta: np.asarray(xi, dtype=float) + 0.0,
                       lambda xi, eta: np.asarray(eta, dtype=float) + 0.0,
                       _ones, _zeros, _zeros, _ones)

_A = 0.2
_pi = math.pi


def _bump(xi, eta):
    return np.sin(_pi * xi) * np.sin(_pi * eta)


# x = xi + a sin(pi xi) sin(pi eta);  y = eta - a exp(eta) sin(pi xi) sin(pi eta)
CURVILINEAR = MappingSpec(
    "curvilinear",
    x=lambda xi, eta: xi + _A * _bump(xi, eta),
    y=lambda xi, eta: eta - _A * np.exp(eta) * _bump(xi, eta),
    x_xi=lambda xi, eta: 1.0 + _A * _pi * np.cos(_pi * xi) * np.sin(_pi * eta),
    x_eta=lambda xi, eta: _A * _pi * np.sin(_pi * xi) * np.cos(_pi * eta),
    y_xi=lambda xi, eta: -_A * np.exp(eta) * _pi * np.cos(_pi * xi) * np.sin(_pi * eta),
    y_eta=lambda xi, eta: 1.0 - _A * np.exp(eta) * np.sin(_pi * xi)
    * (np.sin(_pi * eta) + _pi * np.cos(_pi * eta)),
)

MAPPINGS = {"identity": IDENTITY, "curvilinear": CURVILINEAR}


def get_mapping(name: str | MappingSpec) -> MappingSpec:
    if isinstance(name, MappingSpec):
        return name
    try:
        return MAPPINGS[name]
    except KeyError:
        raise ValueError(f"unknown mapping {name!r}; choose from {sorted(MAPPINGS)}") from None


@dataclass(frozen=True)
class Triangulation:
    """Uniform split of the unit square into ``2 N^2`` right triangles."""

    N: int
    vertices: np.ndarray  # (E, 3, 2) computational coordinates
    orientation: np.ndarray  # (E,) 0 = lower-left, 1 = upper-right

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def num_elements(self) -> int:
        return len(self.vertices)

    def areas(self) -> np.ndarray:
        d1 = self.vertices[:, 1] - self.vertices[:, 0]
        d2 = self.vertices[:, 2] - self.vertices[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_uniform_triangulation(N: int) -> Triangulation:
    if N < 1:
        raise ValueError("N must be >= 1")
    h = 1.0 / N
    verts, orient = [], []
    for j in range(N):
        for i in range(N):
            verts.append([(i, j), (i + 1, j), (i, j + 1)])
            orient.append(0)
            verts.append([(i + 1, j + 1), (i, j + 1), (i + 1, j)])
            orient.append(1)
    return Triangulation(N, np.array(verts, dtype=float) * h, np.array(orient))


@dataclass
class FaceCoupling:
    """One shared face: ``perm[i]`` is the right-face node matching left node ``i``."""

    left: tuple[int, int]
    right: tuple[int, int]
    perm: np.ndarray
    b_lambda: np.ndarray | None = None


@dataclass
class CurvedMesh:
    N: int
    mapping: str
    vertices: np.ndarray  # (E, 3, 2) computational
    orientation: np.ndarray
    ref_nodes: np.ndarray  # (n, 2) reference volume nodes
    ref_face_nodes: np.ndarray  # (3, nu, 2)
    comp_nodes: np.ndarray  # (E, n, 2)
    xy: np.ndarray  # (E, n, 2) physical
    metric: np.ndarray  # (E, n, 2, 2): [[x_r, x_s], [y_r, y_s]]
    J: np.ndarray  # (E, n)
    face_comp: np.ndarray  # (E, 3, nu, 2)
    face_xy: np.ndarray  # (E, 3, nu, 2)
    face_metric: np.ndarray  # (E, 3, nu, 2, 2)
    face_normal: np.ndarray  # (E, 3, nu, 2) scaled normal, lambda_n = lambda . N
    face_b: np.ndarray  # (3, nu)
    couplings: list[FaceCoupling] = field(default_factory=list)
    # neighbour lookup, filled by pair_periodic_faces
    nbr_elem: np.ndarray | None = None  # (E, 3)
    nbr_face: np.ndarray | None = None  # (E, 3)
    nbr_perm: np.ndarray | None = None  # (E, 3, nu): neighbour node for own node i
    is_left: np.ndarray | None = None  # (E, 3)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def num_elements(self) -> int:
        return len(self.vertices)

    def contravariant(self, lam_xy: np.ndarray, face: bool = False) -> np.ndarray:
        """Map physical velocities ``(..., 2)`` to reference-element components."""
        g = self.face_metric if face else self.metric
        lr = g[..., 1, 1] * lam_xy[..., 0] - g[..., 0, 1] * lam_xy[..., 1]
        ls = -g[..., 1, 0] * lam_xy[..., 0] + g[..., 0, 0] * lam_xy[..., 1]
        return np.stack([lr, ls], axis=-1)

    def face_normal_velocity(self, velocity: Callable) -> np.ndarray:
        """``lambda . N`` at every element face node, outward from the element."""
        lx, ly = velocity(self.face_xy[..., 0], self.face_xy[..., 1])
        return lx * self.face_normal[..., 0] + ly * self.face_normal[..., 1]

    def total_area(self, H: np.ndarray) -> float:
        return float(np.sum(self.J @ H))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "mapping": self.mapping,
            "vertices": self.vertices.tolist(),
            "nodes": self.xy.tolist(),
            "pairs": [{"left": list(c.left), "right": list(c.right), "perm": c.perm.tolist()}
                      for c in self.couplings],
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def _affine(vertices: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Computational coordinates of reference points ``ref`` for every element."""
    v0 = vertices[:, None, 0, :]
    d1 = (vertices[:, 1] - vertices[:, 0])[:, None, :]
    d2 = (vertices[:, 2] - vertices[:, 0])[:, None, :]
    return v0 + ref[None, :, 0:1] * d1 + ref[None, :, 1:2] * d2


def _composed_metric(mapping: MappingSpec, vertices: np.ndarray, comp: np.ndarray) -> np.ndarray:
    G = mapping.jacobian(comp[..., 0], comp[..., 1])
    A = np.stack([vertices[:, 1] - vertices[:, 0], vertices[:, 2] - vertices[:, 0]], axis=-1)  # (E,2,2)
    extra = G.ndim - 3
    A = A.reshape(A.shape[:1] + (1,) * extra + (2, 2))
    return G @ A


def apply_mapping(tri: Triangulation, mapping: str | MappingSpec, ops: SbpOperatorSet) -> CurvedMesh:
    """Place the operator's nodes on every element and compute metric terms."""
    mapping = get_mapping(mapping)
    comp = _affine(tri.vertices, ops.nodes)
    E = tri.num_elements
    nu = ops.nu
    face_comp = _affine(tri.vertices, ops.face_nodes.reshape(-1, 2)).reshape(E, 3, nu, 2)

    metric = _composed_metric(mapping, tri.vertices, comp)
    J = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0]
    if np.any(J <= 0):
        e, i = np.unravel_index(np.argmin(J), J.shape)
        raise NegativeJacobian(f"J={J[e, i]:.3e} at element {e}, node {i}")

    fmetric = _composed_metric(mapping, tri.vertices, face_comp)
    n = ops.normals[None, :, None, :]
    Nx = n[..., 0] * fmetric[..., 1, 1] - n[..., 1] * fmetric[..., 1, 0]
    Ny = -n[..., 0] * fmetric[..., 0, 1] + n[..., 1] * fmetric[..., 0, 0]

    xy = np.stack(mapping(comp[..., 0], comp[..., 1]), axis=-1)
    fxy = np.stack(mapping(face_comp[..., 0], face_comp[..., 1]), axis=-1)
    return CurvedMesh(
        N=tri.N, mapping=mapping.name, vertices=tri.vertices, orientation=tri.orientation,
        ref_nodes=ops.nodes, ref_face_nodes=ops.face_nodes, comp_nodes=comp, xy=xy,
        metric=metric, J=J, face_comp=face_comp, face_xy=fxy, face_metric=fmetric,
        face_normal=np.stack([Nx, Ny], axis=-1), face_b=ops.B,
    )


def pair_periodic_faces(mesh: CurvedMesh, tol: float = MATCH_TOL) -> list[FaceCoupling]:
    """Pair every face with its neighbour on the periodic unit square.

    Faces are matched through their midpoints in computational space modulo 1,
    then nodes by nearest point.  The scaled-normal condition
    ``b_L N_L = -b_R N_R`` is checked at every matched node.
    """
    E = mesh.num_elements
    nu = mesh.face_comp.shape[2]
    mids = np.mod(mesh.face_comp.mean(axis=2), 1.0)
    key = lambda m: tuple(np.round(m * mesh.N * 2).astype(int) % (2 * mesh.N))  # noqa: E731
    table: dict[tuple, list[tuple[int, int]]] = {}
    for e in range(E):
        for f in range(3):
            table.setdefault(key(mids[e, f]), []).append((e, f))

    nbr_elem = -np.ones((E, 3), dtype=int)
    nbr_face = -np.ones((E, 3), dtype=int)
    nbr_perm = np.zeros((E, 3, nu), dtype=int)
    is_left = np.zeros((E, 3), dtype=bool)
    couplings = []
    for e in range(E):
        for f in range(3):
            if nbr_elem[e, f] >= 0:
                continue
            partners = [ef for ef in table[key(mids[e, f])] if ef != (e, f)]
            if len(partners) != 1:
                raise UnmatchedFace(f"face {f} of element {e} has {len(partners)} candidate partners")
            er, fr = partners[0]
            left = np.mod(mesh.face_comp[e, f], 1.0)
            right = np.mod(mesh.face_comp[er, fr], 1.0)
            diff = left[:, None, :] - right[None, :, :]
            diff -= np.round(diff)  # torus distance
            dist = np.linalg.norm(diff, axis=-1)
            perm = np.argmin(dist, axis=1)
            if np.max(dist[np.arange(nu), perm]) > tol or len(set(perm.tolist())) != nu:
                raise UnmatchedFace(f"face nodes of element {e} face {f} do not match element {er} face {fr}")
            bl = mesh.face_b[f][:, None] * mesh.face_normal[e, f]
            br = mesh.face_b[fr][perm][:, None] * mesh.face_normal[er, fr, perm]
            if np.max(np.abs(bl + br)) > NORMAL_TOL:
                raise UnmatchedFace(f"scaled normals not opposite on element {e} face {f}: "
                                    f"{np.max(np.abs(bl + br)):.2e}")
            couplings.append(FaceCoupling((e, f), (er, fr), perm))
            nbr_elem[e, f], nbr_face[e, f], nbr_perm[e, f], is_left[e, f] = er, fr, perm, True
            nbr_elem[er, fr], nbr_face[er, fr], nbr_perm[er, fr] = e, f, np.argsort(perm)
    mesh.couplings = couplings
    mesh.nbr_elem, mesh.nbr_face, mesh.nbr_perm, mesh.is_left = nbr_elem, nbr_face, nbr_perm, is_left
    return couplings


def build_mesh(N: int, mapping: str | MappingSpec, ops: SbpOperatorSet) -> CurvedMesh:
    """Triangulate, map and pair in one call."""
    mesh = apply_mapping(build_uniform_triangulation(N), mapping, ops)
    pair_periodic_faces(mesh)
    return mesh
