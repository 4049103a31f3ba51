import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffuse_sd.fem import (FunctionSpace, assemble_scalar_mass, eval_basis, geometry, make_quadrature,
                            monomial_integral)
from diffuse_sd.mesh import RectangleSpec, TriMesh, build_uniform


def reference_triangle():
    return TriMesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]],
                   [[0, 1], [1, 2], [2, 0]], ["bottom", "diag", "left"])


def quad_monomial(rule, a, b):
    lam = rule.points
    return 0.5 * float(np.sum(rule.weights * lam[:, 1] ** a * lam[:, 2] ** b))


def test_p1_nodal_at_vertex():
    vals, _ = eval_basis("P1", [1.0, 0.0, 0.0])
    assert np.allclose(vals, [1.0, 0.0, 0.0], atol=0)


def test_p2_edge_midpoint_basis():
    vals, _ = eval_basis("P2", [0.5, 0.5, 0.0])
    # local order: vertices 0,1,2 then edges (0,1), (1,2), (2,0)
    expected = np.zeros(6)
    expected[3] = 1.0
    assert np.allclose(vals, expected, atol=1e-15)


@pytest.mark.parametrize("kind", ["P1", "P2"])
def test_partition_of_unity(kind):
    rng = np.random.default_rng(0)
    for _ in range(10):
        lam = rng.dirichlet(np.ones(3))
        assert eval_basis(kind, lam)[0].sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("kind", ["P1", "P2", "P1+bubble"])
def test_gradient_matches_finite_difference(kind):
    rng = np.random.default_rng(1)
    step = 1e-6
    for _ in range(5):
        xi, eta = rng.uniform(0.1, 0.4, size=2)
        _, grad = eval_basis(kind, [1 - xi - eta, xi, eta])
        for d, (dx, dy) in enumerate([(step, 0.0), (0.0, step)]):
            hi, _ = eval_basis(kind, [1 - xi - dx - eta - dy, xi + dx, eta + dy])
            lo, _ = eval_basis(kind, [1 - xi - eta, xi, eta])
            assert np.allclose((hi - lo) / step, grad[:, d], atol=1e-5)


def test_bubble_vanishes_on_boundary_and_peaks_at_centroid():
    assert eval_basis("P1+bubble", [1 / 3, 1 / 3, 1 / 3])[0][3] == pytest.approx(1.0, abs=1e-15)
    assert eval_basis("P1+bubble", [0.5, 0.5, 0.0])[0][3] == 0.0


def test_degree_one_integrates_constant_to_half():
    assert quad_monomial(make_quadrature(1), 0, 0) == pytest.approx(0.5, abs=1e-15)


def test_monomial_oracle_example():
    assert monomial_integral(2, 3) == pytest.approx(1 / 420, rel=1e-15)
    assert quad_monomial(make_quadrature(5), 2, 3) == pytest.approx(1 / 420, rel=1e-14)


@pytest.mark.parametrize("degree", range(1, 11))
def test_rule_exactness_and_normalisation(degree):
    rule = make_quadrature(degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(rule.weights > 0)
    assert np.all(rule.points >= 0) and np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-15)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert quad_monomial(rule, a, b) == pytest.approx(monomial_integral(a, b), rel=1e-13)


def test_default_rule_has_at_least_twelve_points():
    assert make_quadrature(6).n >= 12


@pytest.mark.parametrize("degree", [0, 11])
def test_unsupported_degree_rejected(degree):
    with pytest.raises(ValueError):
        make_quadrature(degree)


def test_reference_p1_mass_matrix():
    m = assemble_scalar_mass(FunctionSpace(reference_triangle(), "P1")).toarray()
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
    assert np.allclose(m, expected, atol=1e-16)


def test_zero_weight_gives_zero_matrix():
    m = assemble_scalar_mass(FunctionSpace(reference_triangle(), "P2"), 0.0)
    assert m.nnz == 0 or abs(m).max() == 0


def test_constant_weight_scales_linearly():
    mesh = build_uniform(RectangleSpec((0, 1), (0, 1), 3, 3))
    space = FunctionSpace(mesh, "P2")
    one = assemble_scalar_mass(space)
    c = assemble_scalar_mass(space, 3.7)
    assert abs(c - 3.7 * one).max() <= 1e-14 * abs(c).max()


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        assemble_scalar_mass(FunctionSpace(reference_triangle(), "P1"), -1.0)


def test_mass_entries_sum_to_area_and_rows_to_basis_integrals():
    mesh = build_uniform(RectangleSpec((0, 2), (0, 1), 4, 3))
    for kind in ("P1", "P2", "P1+bubble"):
        m = assemble_scalar_mass(FunctionSpace(mesh, kind))
        assert abs(m - m.T).max() <= 1e-13 * abs(m).max()
        if kind != "P1+bubble":  # nodal bases sum to one
            assert m.sum() == pytest.approx(2.0, rel=1e-12)
    p1 = assemble_scalar_mass(FunctionSpace(mesh, "P1"))
    # int of a P1 hat = (area of its patch) / 3
    patch = np.zeros(mesh.nv)
    np.add.at(patch, mesh.triangles.ravel(), np.repeat(mesh.areas, 3))
    assert np.allclose(np.asarray(p1.sum(axis=1)).ravel(), patch / 3, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.integers(0, 2), b=st.integers(0, 2))
def test_weighted_mass_exact_for_polynomial_weight(a, b):
    # P1 x P1 x (x^a y^b) has degree <= 6 and is integrated exactly
    mesh = reference_triangle()
    m = assemble_scalar_mass(FunctionSpace(mesh, "P1"), lambda x, y: x ** a * y ** b).toarray()
    # entry (1, 2) = int x * y * x^a y^b = monomial(a+1, b+1)
    assert m[1, 2] == pytest.approx(monomial_integral(a + 1, b + 1), rel=1e-13)
    assert m[1, 1] == pytest.approx(monomial_integral(a + 2, b), rel=1e-13)


@pytest.mark.parametrize("kind, per_vertex, per_edge, per_cell", [("P1", 1, 0, 0), ("P2", 1, 1, 0),
                                                                  ("P1+bubble", 1, 0, 1)])
def test_dof_counts(kind, per_vertex, per_edge, per_cell):
    mesh = build_uniform(RectangleSpec((0, 1), (0, 2), 3, 5))
    for comp in (1, 2):
        space = FunctionSpace(mesh, kind, comp)
        assert space.dof_count == comp * (per_vertex * mesh.nv + per_edge * mesh.ne + per_cell * mesh.nt)


def test_dirichlet_dofs_lie_on_tagged_edges():
    mesh = build_uniform(RectangleSpec((0, 1), (0, 2), 3, 5))
    space = FunctionSpace(mesh, "P2", 2)
    dofs = space.dirichlet_dofs(("top", "left"))
    nodes = space.nodes[dofs // 2]
    assert np.all(np.isclose(nodes[:, 1], 2.0) | np.isclose(nodes[:, 0], 0.0))
    assert len(dofs) == 2 * (2 * 3 + 1 + 2 * 5 + 1 - 1)


@pytest.mark.parametrize("kind", ["P1", "P2", "P1+bubble"])
def test_interpolation_reproduces_linear_functions(kind):
    mesh = build_uniform(RectangleSpec((0, 1), (0, 1), 3, 2))
    space = FunctionSpace(mesh, kind)
    c = space.interpolate(lambda x, y: 2 * x - 3 * y + 1)
    geom = geometry(mesh, 4)
    vals = space.evaluate(c, geom)
    assert np.allclose(vals, 2 * geom.x - 3 * geom.y + 1, atol=1e-13)
