import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cell2macro.errors import InvalidParams, RankDeficiency
from cell2macro.fem import (QUAD_BARY, QUAD_W, FEField, MaterialParams, P1FluidSpace, P2Space,
                            assemble_a, assemble_b, assemble_h1_gram, assemble_tensor_form,
                            check_constraint_rank, energy, grad_at_quadpoints, h1_norm,
                            h1_seminorm, is_symmetric, l2_norm, lame_tensor,
                            rigid_motion_basis, rigid_trace_rows)
from cell2macro.geometry import DomainShape, build_plain_mesh
from cell2macro.textio import read_field, write_field

finite = st.floats(-2, 2, allow_nan=False)


@pytest.fixture(scope="module")
def square():
    return build_plain_mesh(DomainShape("square", 0.5), 1 / 8)


def test_quadrature_integrates_quartics_on_reference_triangle():
    # int over the reference triangle of l1^a l2^b l3^c = a! b! c! 2! / (a+b+c+2)! * area
    from math import factorial
    for a, b, c in [(4, 0, 0), (2, 2, 0), (1, 1, 2), (0, 3, 1), (2, 1, 1)]:
        exact = factorial(a) * factorial(b) * factorial(c) * 2 / factorial(a + b + c + 2)
        val = np.sum(QUAD_W * QUAD_BARY[:, 0] ** a * QUAD_BARY[:, 1] ** b
                     * QUAD_BARY[:, 2] ** c)
        assert val == pytest.approx(exact, rel=1e-13)


def test_material_params_validation():
    with pytest.raises(InvalidParams):
        MaterialParams(1.0, 1.0, -1.0)
    with pytest.raises(InvalidParams):
        MaterialParams(1.0, 0.0, 1.0)
    with pytest.raises(InvalidParams):
        MaterialParams(-2.0, 1.0, 1.0)
    assert MaterialParams(0.2, 1.0, 0.1).ellipticity_bound() == pytest.approx(0.05)


def test_uniaxial_strain_energy(square):
    V = P2Space(square)
    A = assemble_a(V, MaterialParams(1.0, 1.0, 1.0))
    u = V.interpolate(lambda x: np.column_stack([x[:, 0], 0 * x[:, 0]]))
    # lam (div u)^2 + 2 mu |D u|^2 = 1 + 2 over unit area
    assert energy(u, A) == pytest.approx(3.0, rel=1e-12)
    # |u|^2 = x^2 integrates to 1/12, |grad u|^2 = 1
    assert h1_norm(u) ** 2 == pytest.approx(1 + 1 / 12, rel=1e-12)


def test_rigid_motions_have_zero_energy(square):
    V = P2Space(square)
    A = assemble_a(V, MaterialParams(1.0, 1.0, 1.0))
    for r in rigid_motion_basis(V):
        assert abs(energy(r, A)) < 1e-12
    check_constraint_rank(rigid_trace_rows(V))


def test_constraint_rank_detects_dependence():
    C = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    with pytest.raises(RankDeficiency):
        check_constraint_rank(C)


def test_tensor_form_matches_lame_assembly(square):
    V = P2Space(square)
    p = MaterialParams(0.7, 1.3, 1.0)
    A1 = assemble_a(V, p)
    A2 = assemble_tensor_form(V, lame_tensor(p.lam, p.mu))
    assert abs(A1 - A2).max() < 1e-12
    assert is_symmetric(A1)


def test_divergence_of_x_gives_fluid_area(disk):
    from cell2macro.geometry import build_unit_cell_mesh
    m = build_unit_cell_mesh(disk, 1 / 8)
    V, P = P2Space(m), P1FluidSpace(m)
    B = assemble_b(V, P)
    u = V.interpolate(lambda x: np.column_stack([x[:, 0], 0 * x[:, 0]]))
    # the P1 basis sums to one, so 1^T B u = int_fluid div u
    assert np.sum(B @ u.coefficients) == pytest.approx(m.area_of(1), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(finite, min_size=12, max_size=12))
def test_p2_reproduces_quadratic_gradients(c):
    m = build_plain_mesh(DomainShape("square", 0.5), 1 / 4)
    V = P2Space(m)
    c = np.array(c).reshape(2, 6)

    def f(x):
        X, Y = x[:, 0], x[:, 1]
        basis = np.stack([np.ones_like(X), X, Y, X * X, X * Y, Y * Y])
        return (c @ basis).T

    def grad(x):
        X, Y = x[..., 0], x[..., 1]
        dx = np.stack([0 * X, 1 + 0 * X, 0 * X, 2 * X, Y, 0 * X])
        dy = np.stack([0 * X, 0 * X, 1 + 0 * X, 0 * X, X, 2 * Y])
        return np.stack([np.einsum("ak,k...->...a", c, dx),
                         np.einsum("ak,k...->...a", c, dy)], axis=-1)

    u = V.interpolate(f)
    g = grad_at_quadpoints(u)
    assert np.allclose(g, grad(V.geo.qpoints), atol=1e-11)


@settings(max_examples=20, deadline=None)
@given(finite, finite, st.floats(0.1, 3))
def test_norms_scale_linearly(a, b, s):
    m = build_plain_mesh(DomainShape("disk", 0.5), 1 / 4)
    V = P2Space(m)
    u = V.interpolate(lambda x: np.column_stack([a * x[:, 0] ** 2, b * x[:, 0] * x[:, 1]]))
    assert h1_norm(u * s) == pytest.approx(s * h1_norm(u), rel=1e-12, abs=1e-14)
    assert h1_norm(u) ** 2 == pytest.approx(l2_norm(u) ** 2 + h1_seminorm(u) ** 2, rel=1e-12,
                                            abs=1e-14)


def test_h1_gram_matches_norm(square):
    V = P2Space(square)
    G = assemble_h1_gram(V)
    u = V.interpolate(lambda x: np.column_stack([np.sin(x[:, 0]), x[:, 1] ** 2]))
    assert u.coefficients @ (G @ u.coefficients) == pytest.approx(h1_norm(u) ** 2, rel=1e-12)


def test_periodic_space_identifies_faces(disk):
    from cell2macro.geometry import build_unit_cell_mesh
    m = build_unit_cell_mesh(disk, 1 / 8)
    V = P2Space(m, periodic=True)
    W = P2Space(m)
    assert V.n_nodes < W.n_nodes
    assert np.all(V.node_coords < 0.5 - 1e-12)


def test_field_text_round_trip(tmp_path, square):
    V = P2Space(square)
    u = V.interpolate(lambda x: np.column_stack([np.exp(x[:, 0]), np.pi * x[:, 1]]))
    write_field(tmp_path / "u.field", u)
    v = read_field(tmp_path / "u.field", V)
    assert np.array_equal(u.coefficients, v.coefficients)
    with pytest.raises(ValueError):
        read_field(tmp_path / "u.field", P2Space(build_plain_mesh(DomainShape(), 1 / 4)))


def test_field_space_mismatch(square):
    V, W = P2Space(square), P2Space(square)
    with pytest.raises(ValueError):
        FEField(V, np.zeros(V.dof_count)) - FEField(W, np.zeros(W.dof_count))
