"""Volume and face cubature rules on the reference triangle.

Volume rules are stored as symmetry-orbit parameters (see :mod:`sbpsat.orbits`)
found offline by a Gauss-Newton moment solve.  The SBP-Omega p=3 and p=4
layouts admit one-parameter families; the free parameter was pinned so the
minimum node spacing equals the spacing listed in ``solver.CFL_TABLE``
(0.2402 and 0.1636), keeping the tabulated maximal Courant numbers meaningful.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from sbpsat.orbits import OrbitLayout, min_node_spacing

FAMILIES = ("gamma", "omega")
DEGREES = (1, 2, 3, 4)

REFERENCE_AREA = 0.5
VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# face j is opposite vertex j and runs from vertex j+1 to vertex j+2
FACE_VERTICES = ((1, 2), (2, 0), (0, 1))
FACE_LENGTHS = np.array([math.sqrt(2.0), 1.0, 1.0])
FACE_NORMALS = np.array([[1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
                         [-1.0, 0.0],
                         [0.0, -1.0]])


class ConstructionFailed(RuntimeError):
    pass


# (family, p) -> (orbit layout, orbit parameters followed by one weight per orbit,
#                 certified exactness degree)
_RULE_TABLE: dict[tuple[str, int], tuple[tuple[str, ...], tuple[float, ...], int]] = {
    ("gamma", 1): (("vertex",), (1.0 / 6.0,), 1),
    ("gamma", 2): (("vertex", "midedge", "centroid"), (1.0 / 40.0, 1.0 / 15.0, 9.0 / 40.0), 3),
    ("gamma", 3): (
        ("vertex", "edge", "s21"),
        (0.2934695559090402, 0.20734517566359092,
         0.00743645651241029, 0.02442084061702552, 0.11038852892020533),
        5,
    ),
    ("gamma", 4): (
        ("vertex", "midedge", "edge", "s21", "s21"),
        (0.2113248654051809, 0.13079159382974642, 0.4247639617258109,
         0.0031746031746030987, 0.012698412698412972, 0.01071428571428575,
         0.05058386489568753, 0.07878121446939157),
        7,
    ),
    ("omega", 1): (("s21",), (1.0 / 6.0, 1.0 / 6.0), 2),
    ("omega", 2): (
        ("s21", "s21"),
        (0.09157621350977076, 0.4459484909159649,
         0.05497587182766095, 0.11169079483900572),
        4,
    ),
    ("omega", 3): (
        ("centroid", "s21", "s111"),
        (0.08581418957880968, 0.5853225904683257, 0.3451225904006591,
         0.10154889259387338, 0.04302599778422056, 0.04489551900891082),
        5,
    ),
    ("omega", 4): (
        ("s21", "s21", "s21", "s111"),
        (0.06079504831719151, 0.24114746060451134, 0.4714143032528701,
         0.2769915319782089, 0.04567832062395621,
         0.022845618118681434, 0.06414418250887015, 0.021686198380192954,
         0.028995333829461057),
        7,
    ),
}


@dataclass(frozen=True)
class CubatureRule:
    """Nodes ``(n, 2)`` and positive weights on the reference triangle."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    family: str = ""
    p: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["xi", "eta", "w"])
            for (x, y), w in zip(self.nodes, self.weights):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(w))])


@dataclass(frozen=True)
class FaceRule:
    """Gauss-Legendre rule on one reference face.

    ``params`` are positions in [0, 1] along the face (from its first to its
    second vertex); ``weights`` are scaled by the face length.
    """

    face: int
    params: np.ndarray
    weights: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        a, b = FACE_VERTICES[self.face]
        return VERTICES[a][None, :] + self.params[:, None] * (VERTICES[b] - VERTICES[a])[None, :]

    @property
    def normal(self) -> np.ndarray:
        return FACE_NORMALS[self.face]


def analytic_moment(i: int, j: int) -> float:
    """Integral of ``xi**i * eta**j`` over the reference triangle."""
    return float(exact_moment(i, j))


def exact_moment(i: int, j: int) -> Fraction:
    if i < 0 or j < 0:
        raise ValueError("exponents must be nonnegative")
    return Fraction(math.factorial(i) * math.factorial(j), math.factorial(i + j + 2))


def volume_cubature(family: str, p: int) -> CubatureRule:
    """The symmetric volume rule of the SBP-Gamma or SBP-Omega operator of degree ``p``."""
    family = normalize_family(family)
    if p not in DEGREES:
        raise ValueError(f"p must be one of {DEGREES}, got {p}")
    kinds, values, degree = _RULE_TABLE[family, p]
    nodes, weights = OrbitLayout(kinds).unpack(np.array(values, dtype=float))
    if np.any(weights <= 0):
        raise ConstructionFailed(f"nonpositive weight in {family} p={p}")
    return CubatureRule(nodes, weights, degree, family, p)


def normalize_family(family: str) -> str:
    key = str(family).lower().replace("sbp", "").strip("-_ ")
    aliases = {"gamma": "gamma", "g": "gamma", "γ": "gamma", "Γ": "gamma",
               "omega": "omega", "o": "omega", "ω": "omega", "Ω": "omega"}
    if key not in aliases:
        raise ValueError(f"unknown operator family: {family!r}")
    return aliases[key]


def face_rule(p: int, face: int = 0) -> FaceRule:
    """``p+1`` point Gauss-Legendre rule on reference face ``face``."""
    if p < 1:
        raise ValueError("p=0 operators are not supported")
    t, w = leggauss(p + 1)
    return FaceRule(face, 0.5 * (t + 1.0), 0.5 * w * FACE_LENGTHS[face])


def max_moment_error(nodes, weights, degree: int) -> float:
    """Largest error over all monomials of total degree <= ``degree``."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    err = 0.0
    for d in range(degree + 1):
        for i in range(d + 1):
            vals = nodes[:, 0] ** i * nodes[:, 1] ** (d - i)
            err = max(err, abs(weights @ vals - analytic_moment(i, d - i)))
    return err


def _face_monomial_error(rule: FaceRule, degree: int) -> float:
    # exact: integral over [0,1] of t^k dt times the face length
    length = FACE_LENGTHS[rule.face]
    return max(abs(rule.weights @ rule.params**k - length / (k + 1)) for k in range(degree + 1))


@dataclass(frozen=True)
class CertifyReport:
    degree: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def certify(rule: CubatureRule | FaceRule, degree: int, tol: float = 1e-12) -> CertifyReport:
    if isinstance(rule, FaceRule):
        err = _face_monomial_error(rule, degree)
    else:
        err = max_moment_error(rule.nodes, rule.weights, degree)
    return CertifyReport(degree, err, tol)


def observed_degree(rule: CubatureRule, tol: float = 1e-12, max_degree: int = 20) -> int:
    d = 0
    while d < max_degree and certify(rule, d + 1, tol).passed:
        d += 1
    return d


def node_spacing(rule: CubatureRule) -> float:
    """Minimum distance between distinct nodes."""
    return min_node_spacing(rule.nodes)


def face_node_indices(rule: CubatureRule, face: int, tol: float = 1e-12) -> np.ndarray:
    """Indices of volume nodes on ``face``, ordered along the face parameter."""
    a, b = FACE_VERTICES[face]
    va, vb = VERTICES[a], VERTICES[b]
    d = vb - va
    rel = rule.nodes - va
    cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
    on = np.flatnonzero(np.abs(cross) < tol)
    t = rel[on] @ d / (d @ d)
    return on[np.argsort(t)]


def symmetry_maps() -> list[np.ndarray]:
    """The six vertex permutations of the reference triangle."""
    import itertools
    return [np.array(perm) for perm in itertools.permutations(range(3))]


def apply_symmetry(nodes, perm) -> np.ndarray:
    """Map reference points by permuting their barycentric coordinates."""
    nodes = np.asarray(nodes, dtype=float)
    bary = np.column_stack([1.0 - nodes[:, 0] - nodes[:, 1], nodes[:, 0], nodes[:, 1]])
    bary = bary[:, perm]
    return bary[:, 1:]
