import json
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from conftest import ALL_OPERATORS
from sbpsat.cubature import apply_symmetry, symmetry_maps
from sbpsat.operators import (Inconsistent, SbpOperatorSet, boundary_moment, build_E, build_S,
                              build_extrapolation, build_operator, certify_operator)
from sbpsat.polybasis import monomial_exponents, monomial_vandermonde, num_basis

R_SIZES = {("gamma", p): (p + 1, p + 1) for p in range(1, 5)}
R_SIZES.update({("omega", 1): (2, 3), ("omega", 2): (3, 6), ("omega", 3): (4, 10), ("omega", 4): (5, 15)})


def symbolic_boundary_integral(a: int, b: int, direction: int) -> Fraction:
    """oint xi^a eta^b n_dir ds, by parametrizing the three faces symbolically."""
    t = sp.symbols("t")
    faces = [  # (xi(t), eta(t), outward normal, |dx/dt|)
        (1 - t, t, (1 / sp.sqrt(2), 1 / sp.sqrt(2)), sp.sqrt(2)),
        (sp.Integer(0), 1 - t, (-1, 0), 1),
        (t, sp.Integer(0), (0, -1), 1),
    ]
    total = 0
    for x, y, n, ds in faces:
        total += sp.integrate(x**a * y**b * n[direction] * ds, (t, 0, 1))
    total = sp.nsimplify(sp.simplify(total))
    return Fraction(int(sp.numer(total)), int(sp.denom(total)))


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (0, 1), (2, 1), (3, 0), (0, 4), (2, 2)])
@pytest.mark.parametrize("direction", [0, 1])
def test_boundary_moment_closed_form_matches_symbolic(a, b, direction):
    assert boundary_moment(a, b, direction) == symbolic_boundary_integral(a, b, direction)


def test_certification_passes(ops):
    rep = certify_operator(ops)
    assert rep.passed, rep.as_dict()
    assert rep.skew <= 1e-13 and rep.decomposition <= 1e-13
    assert rep.accuracy <= 1e-10 and rep.e_accuracy <= 1e-10 and rep.compatibility <= 1e-10
    assert rep.h_min > 0


def test_sharpness_recorded(ops):
    # degree p operators are not exact for degree p + 1
    assert certify_operator(ops).sharpness > 1e-6


def test_examples(ops):
    one = np.ones(ops.n)
    xi = ops.nodes[:, 0]
    np.testing.assert_allclose(ops.Dxi @ one, 0, atol=1e-12)
    np.testing.assert_allclose(ops.Dxi @ xi, 1, atol=1e-12)
    np.testing.assert_allclose(ops.Qxi + ops.Qxi.T, ops.Exi, atol=1e-13)
    np.testing.assert_allclose(ops.Qeta + ops.Qeta.T, ops.Eeta, atol=1e-13)
    assert abs(one @ ops.Exi @ one) < 1e-14
    assert xi @ ops.Exi @ one == pytest.approx(0.5, abs=1e-13)


def test_E_symmetric(ops):
    np.testing.assert_allclose(ops.Exi, ops.Exi.T, atol=1e-15)
    np.testing.assert_allclose(ops.Eeta, ops.Eeta.T, atol=1e-15)


def test_E_is_face_decomposition(ops):
    Exi, Eeta = build_E(ops.R, ops.B, ops.normals)
    np.testing.assert_array_equal(Exi, ops.Exi)
    np.testing.assert_array_equal(Eeta, ops.Eeta)


def test_extrapolation_sizes_and_exactness(ops):
    assert ops.extrapolation_size() == R_SIZES[ops.family, ops.p]
    mono = monomial_vandermonde(ops.p, ops.nodes).values
    for j in range(3):
        np.testing.assert_allclose(ops.R[j] @ np.ones(ops.n), 1, atol=1e-13)
        exact = monomial_vandermonde(ops.p, ops.face_nodes[j]).values
        np.testing.assert_allclose(ops.R[j] @ mono, exact, atol=1e-12)


def test_gamma_extrapolation_is_local():
    R, idx = build_extrapolation("gamma", 3, 0)
    assert R.shape == (4, 4) and len(idx) == 4
    ops = build_operator("gamma", 3)
    others = np.setdiff1d(np.arange(ops.n), idx)
    assert not ops.R[0][:, others].any()


def test_nullspace_dimensions():
    for p in range(1, 5):
        assert build_operator("omega", p).nullspace_dim == 0
    # recorded rather than predicted for the boundary-node family
    dims = [build_operator("gamma", p).nullspace_dim for p in range(1, 5)]
    assert all(d >= 0 for d in dims)


@pytest.mark.parametrize("family,p", [("gamma", 3), ("gamma", 4)])
def test_minimum_norm_S(family, p):
    ops = build_operator(family, p)
    n = ops.n
    from sbpsat.polybasis import orthonormal_vandermonde
    V = orthonormal_vandermonde(p, ops.nodes)
    # any skew-symmetric K with K V = 0 keeps accuracy; S must be orthogonal to all of them
    iu = np.triu_indices(n, 1)
    A = np.zeros((n * V.values.shape[1], len(iu[0])))
    m = V.values.shape[1]
    for col, (a, b) in enumerate(zip(*iu)):
        A[a * m:(a + 1) * m, col] += V.values[b]
        A[b * m:(b + 1) * m, col] -= V.values[a]
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * s[0]))
    null = vt[rank:]
    assert null.shape[0] == ops.nullspace_dim
    for S in (ops.Sxi, ops.Seta):
        assert np.abs(null @ S[iu]).max() <= 1e-8 * np.abs(S[iu]).max()


def test_compatibility_identity(ops):
    mono = monomial_vandermonde(ops.p, ops.nodes)
    H = np.diag(ops.H)
    for E, Vd in ((ops.Exi, mono.dxi), (ops.Eeta, mono.deta)):
        lhs = mono.values.T @ H @ Vd + Vd.T @ H @ mono.values
        np.testing.assert_allclose(lhs, mono.values.T @ E @ mono.values, atol=1e-10)


def test_inconsistent_system_raises():
    ops = build_operator("omega", 2)
    V = monomial_vandermonde(2, ops.nodes)
    with pytest.raises(Inconsistent):
        build_S(ops.H, ops.Exi * 1.5, V.values, V.dxi)


def test_symmetry_group_consistency(ops):
    for perm in symmetry_maps():
        mapped = apply_symmetry(ops.nodes, perm)
        pi = np.array([np.argmin(np.linalg.norm(ops.nodes - m, axis=1)) for m in mapped])
        c = apply_symmetry(np.zeros((1, 2)), perm)[0]
        L = np.column_stack([apply_symmetry(np.array([[1.0, 0.0]]), perm)[0] - c,
                             apply_symmetry(np.array([[0.0, 1.0]]), perm)[0] - c])
        P = np.eye(ops.n)[pi]
        # gradient of (u o T) equals L^T (grad u) o T
        np.testing.assert_allclose(ops.Dxi @ P, L[0, 0] * P @ ops.Dxi + L[1, 0] * P @ ops.Deta, atol=1e-11)
        np.testing.assert_allclose(ops.Deta @ P, L[0, 1] * P @ ops.Dxi + L[1, 1] * P @ ops.Deta, atol=1e-11)


def test_json_round_trip(ops, tmp_path):
    path = tmp_path / "ops.json"
    ops.save_json(path)
    data = json.loads(path.read_text())
    assert set(data) >= {"family", "p", "nodes", "H", "Sxi", "Seta", "R", "B", "normals"}
    back = SbpOperatorSet.load_json(path)
    for name in ("nodes", "H", "Sxi", "Seta", "R", "B", "Dxi", "Deta", "Exi", "Eeta"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ops, name))


@pytest.mark.parametrize("family,p", ALL_OPERATORS)
def test_E_moments_against_closed_form(family, p):
    ops = build_operator(family, p)
    V = monomial_vandermonde(p, ops.nodes).values
    exps = monomial_exponents(p)
    for direction, E in ((0, ops.Exi), (1, ops.Eeta)):
        got = V.T @ E @ V
        want = np.array([[float(boundary_moment(a1 + a2, b1 + b2, direction)) for a2, b2 in exps]
                         for a1, b1 in exps])
        assert got.shape == (num_basis(p), num_basis(p))
        np.testing.assert_allclose(got, want, atol=1e-10)
