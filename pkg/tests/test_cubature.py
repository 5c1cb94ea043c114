import csv
import math

import numpy as np
import pytest

from conftest import ALL_OPERATORS, triangle_moment_fraction
from sbpsat.cubature import (FACE_LENGTHS, analytic_moment, apply_symmetry, certify, face_node_indices,
                             face_rule, node_spacing, observed_degree, symmetry_maps, volume_cubature)
from sbpsat.solver import CFL_TABLE

TABLE = {("gamma", 1): (3, 1), ("gamma", 2): (7, 3), ("gamma", 3): (12, 5), ("gamma", 4): (18, 7),
         ("omega", 1): (3, 2), ("omega", 2): (6, 4), ("omega", 3): (10, 5), ("omega", 4): (15, 7)}


def test_analytic_moment_examples():
    assert analytic_moment(0, 0) == 0.5
    assert analytic_moment(1, 0) == pytest.approx(1 / 6, rel=1e-15)
    assert analytic_moment(1, 1) == pytest.approx(1 / 24, rel=1e-15)


def test_analytic_moment_matches_iterated_integral():
    for i in range(9):
        for j in range(9):
            assert analytic_moment(i, j) == pytest.approx(float(triangle_moment_fraction(i, j)), rel=1e-14)


@pytest.mark.parametrize("family,p", ALL_OPERATORS)
def test_node_count_and_degree(family, p):
    rule = volume_cubature(family, p)
    n, deg = TABLE[family, p]
    assert rule.num_nodes == n
    assert rule.exactness_degree == deg
    assert certify(rule, deg).passed
    assert observed_degree(rule) == deg  # sharp: fails at deg + 1
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 0.5) <= 1e-13


@pytest.mark.parametrize("family,p", ALL_OPERATORS)
def test_node_layout(family, p):
    rule = volume_cubature(family, p)
    for face in range(3):
        count = len(face_node_indices(rule, face))
        assert count == (p + 1 if family == "gamma" else 0)
    if family == "omega":
        bary = np.column_stack([1 - rule.nodes.sum(axis=1), rule.nodes])
        assert bary.min() > 1e-3


@pytest.mark.parametrize("family,p", ALL_OPERATORS)
def test_symmetry(family, p):
    rule = volume_cubature(family, p)
    for perm in symmetry_maps():
        mapped = apply_symmetry(rule.nodes, perm)
        d = np.linalg.norm(mapped[:, None, :] - rule.nodes[None, :, :], axis=-1)
        match = d.argmin(axis=1)
        assert d[np.arange(len(match)), match].max() < 1e-13
        assert sorted(match.tolist()) == list(range(rule.num_nodes))
        np.testing.assert_allclose(rule.weights[match], rule.weights, atol=1e-13)


@pytest.mark.parametrize("family,p", ALL_OPERATORS)
def test_node_spacing_matches_courant_table(family, p):
    assert node_spacing(volume_cubature(family, p)) == pytest.approx(CFL_TABLE[family, p][1], abs=6e-5)


def test_omega1_equal_weights():
    rule = volume_cubature("omega", 1)
    np.testing.assert_allclose(rule.weights, 1 / 6, rtol=1e-15)


def test_certify_examples():
    assert certify(volume_cubature("omega", 2), 4).max_error <= 1e-12
    assert not certify(volume_cubature("gamma", 1), 2).passed
    assert certify(volume_cubature("gamma", 3), 0).max_error <= 1e-15


def test_face_rule():
    fr = face_rule(1, 1)
    np.testing.assert_allclose(np.sort(fr.params), [0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
    np.testing.assert_allclose(fr.weights, 0.5)
    with pytest.raises(ValueError):
        face_rule(0)
    for p in range(1, 5):
        for face in range(3):
            fr = face_rule(p, face)
            assert fr.weights.sum() == pytest.approx(FACE_LENGTHS[face], rel=1e-14)
            assert certify(fr, 2 * p + 1).passed
            assert not certify(fr, 2 * p + 2).passed


def test_rule_csv(tmp_path):
    path = tmp_path / "rule.csv"
    rule = volume_cubature("gamma", 2)
    rule.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["xi", "eta", "w"]
    back = np.array(rows[1:], dtype=float)
    np.testing.assert_array_equal(back[:, :2], rule.nodes)
    np.testing.assert_array_equal(back[:, 2], rule.weights)
