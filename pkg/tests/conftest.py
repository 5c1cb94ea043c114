import math
from fractions import Fraction

import numpy as np
import pytest

from sbpsat.cubature import DEGREES, FAMILIES
from sbpsat.operators import build_operator

ALL_OPERATORS = [(f, p) for f in FAMILIES for p in DEGREES]

# acceptance results collected by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(params=ALL_OPERATORS, ids=[f"{f}{p}" for f, p in ALL_OPERATORS])
def ops(request):
    return build_operator(*request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def triangle_moment_fraction(i: int, j: int) -> Fraction:
    """Integral of xi^i eta^j over the unit right triangle, by iterated 1d integration.

    int_0^1 xi^i int_0^{1-xi} eta^j d eta d xi = 1/(j+1) int_0^1 xi^i (1-xi)^{j+1} d xi,
    expanded binomially so that no factorial identity is assumed.
    """
    total = Fraction(0)
    for k in range(j + 2):
        total += Fraction(math.comb(j + 1, k) * (-1) ** k, i + k + 1)
    return total / (j + 1)


def glue_map(face_left: int, face_right: int):
    """Affine map taking the right reference triangle onto the mirror image of the left
    one across ``face_left``, with face ``face_right`` landing on ``face_left`` reversed."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a, b = (face_left + 1) % 3, (face_left + 2) % 3
    ar, br = (face_right + 1) % 3, (face_right + 2) % 3
    mid = 0.5 * (verts[a] + verts[b])
    opposite = 2 * mid - verts[face_left]  # reflection of the third vertex through the face midpoint
    src = np.array([verts[ar], verts[br], verts[face_right]])
    dst = np.array([verts[b], verts[a], opposite])
    M = np.linalg.solve(np.column_stack([src, np.ones(3)]), dst)  # rows: [x y 1] @ M
    return lambda pts: np.column_stack([pts, np.ones(len(pts))]) @ M


def glued_coupling(ops_L, face_left: int, ops_R, face_right: int):
    """FaceCoupling between two reference elements glued by ``glue_map``."""
    from sbpsat.mesh import FaceCoupling
    T = glue_map(face_left, face_right)
    right_on_left = T(ops_R.face_nodes[face_right])
    d = np.linalg.norm(ops_L.face_nodes[face_left][:, None] - right_on_left[None], axis=-1)
    perm = d.argmin(axis=1)
    assert d[np.arange(len(perm)), perm].max() < 1e-12
    return FaceCoupling((0, face_left), (1, face_right), perm), T
