import csv

import numpy as np
import pytest

from sbpsat.divfree import (analytic_field, divergence_residuals, flux_constraints, identity_residual,
                            project_field, project_face_normals, project_onto_constraints,
                            project_volume_velocities, velocity_error, verify_divergence_free)
from sbpsat.harness import velocity_confined, velocity_constant
from sbpsat.linalg import InfeasibleConstraints
from sbpsat.mesh import apply_mapping, build_mesh, build_uniform_triangulation
from sbpsat.operators import build_operator


def test_projection_examples():
    np.testing.assert_allclose(project_onto_constraints(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.array([1.0, 0.0])),
                               [0.5, 0.5], atol=1e-15)
    b = np.array([[1.0, 2.0, 2.0]])
    x_hat = np.array([1.0, 1.0, 1.0])
    np.testing.assert_allclose(project_onto_constraints(b, x_hat), x_hat - b[0] * 5 / 9, atol=1e-15)


def test_projection_is_orthogonal(rng):
    C = rng.standard_normal((5, 12))
    C[-1] = -C[:-1].sum(axis=0)  # rows sum to zero, like per-element flux balances
    x_hat = rng.standard_normal(12)
    x = project_onto_constraints(C, x_hat)
    np.testing.assert_allclose(C @ x, 0, atol=1e-12)
    step = x_hat - x
    np.testing.assert_allclose(step, C.T @ np.linalg.lstsq(C.T, step, rcond=None)[0], atol=1e-12)


def test_flux_constraint_columns_cancel(ops):
    mesh = build_mesh(2, "identity", ops)
    C = flux_constraints(mesh)
    assert C.shape == (mesh.num_elements, len(mesh.couplings) * ops.nu)
    np.testing.assert_allclose(np.asarray(C.sum(axis=0)).ravel(), 0, atol=1e-15)


def test_constant_velocity_on_identity_map_is_unchanged(ops):
    mesh = build_mesh(3, "identity", ops)
    field = project_field(mesh, ops, velocity_constant)
    np.testing.assert_allclose(field.face_lam_n, field.face_hat, atol=1e-13)
    np.testing.assert_allclose(field.lam, field.lam_hat, atol=1e-13)
    assert velocity_error(field, mesh, ops) < 1e-12


@pytest.mark.parametrize("mapping", ["identity", "curvilinear"])
def test_projected_field_is_discretely_divergence_free(ops, mapping):
    mesh = build_mesh(4, mapping, ops)
    field = project_field(mesh, ops, velocity_confined)
    assert verify_divergence_free(field, mesh, ops).passed(1e-9)
    div, flux = divergence_residuals(field, ops)
    assert div.max() <= 1e-10 and flux.max() <= 1e-12


def test_analytic_field_is_not_discretely_divergence_free():
    ops = build_operator("omega", 2)
    mesh = build_mesh(4, "curvilinear", ops)
    raw = analytic_field(mesh, velocity_confined)
    div, _ = divergence_residuals(raw, ops)
    assert div.max() > 1e-6


def test_face_values_are_single_valued(ops):
    mesh = build_mesh(3, "curvilinear", ops)
    face = project_face_normals(mesh, velocity_confined)
    for c in mesh.couplings:
        (el, fl), (er, fr) = c.left, c.right
        np.testing.assert_allclose(ops.B[fl] * face[el, fl] + ops.B[fr][c.perm] * face[er, fr][c.perm], 0,
                                   atol=1e-14)


def test_volume_stage_single_element(rng):
    ops = build_operator("gamma", 2)
    face = rng.standard_normal((3, ops.nu))
    face -= (np.einsum("jv,jv->", ops.B, face) / ops.B.sum()) * np.ones_like(face)  # zero net flux
    lam_hat = rng.standard_normal((ops.n, 2))
    lam = project_volume_velocities(ops, face, lam_hat)
    from sbpsat.divfree import DiscreteVelocityField
    div, flux = divergence_residuals(DiscreteVelocityField(lam[None], face[None]), ops)
    assert div.max() <= 1e-10 and flux.max() <= 1e-13
    # optimality: the correction lies in the row space of the constraint
    C = np.hstack([ops.Qxi.T, ops.Qeta.T])
    step = np.concatenate([lam[:, 0] - lam_hat[:, 0], lam[:, 1] - lam_hat[:, 1]])
    np.testing.assert_allclose(step, C.T @ np.linalg.lstsq(C.T, step, rcond=None)[0], atol=1e-10)


def test_discrete_identity_after_projection(ops, rng):
    mesh = build_mesh(3, "curvilinear", ops)
    field = project_field(mesh, ops, velocity_confined)
    for e in rng.choice(mesh.num_elements, 4, replace=False):
        for _ in range(5):
            v = rng.standard_normal(ops.n)
            assert identity_residual(ops, field.lam[e], field.face_lam_n[e], v) <= 1e-10 * max(1, np.abs(v).max())


def test_velocity_error_decreases_with_refinement():
    ops = build_operator("gamma", 2)
    errs = [velocity_error(project_field(m, ops, velocity_confined), m, ops)
            for m in (build_mesh(N, "curvilinear", ops) for N in (6, 12))]
    assert errs[1] < errs[0] < 0.05


def test_requires_pairing():
    ops = build_operator("gamma", 1)
    mesh = apply_mapping(build_uniform_triangulation(2), "identity", ops)
    with pytest.raises(InfeasibleConstraints):
        project_face_normals(mesh, velocity_constant)


def test_field_csv(tmp_path):
    ops = build_operator("omega", 1)
    mesh = build_mesh(2, "identity", ops)
    field = project_field(mesh, ops, velocity_constant)
    path = tmp_path / "field.csv"
    field.to_csv(path, mesh)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["element", "node", "x", "y", "lam_xi", "lam_eta"]
    assert len(rows) == 1 + mesh.num_elements * ops.n
    assert float(rows[1][4]) == field.lam[0, 0, 0]
