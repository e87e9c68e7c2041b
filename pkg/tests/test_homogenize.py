import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cell2macro.fem import MaterialParams
from cell2macro.homogenize import (HomogenizedTensor, check_ellipticity, flux_mean,
                                   lame_entries, route_gap, tensor_from_energy,
                                   tensor_from_formula, tensor_report)
from cell2macro.cell import solve_cell_problems

angles = st.floats(0, 2 * np.pi, allow_nan=False)


def test_routes_agree(coarse_correctors):
    tf = tensor_from_formula(coarse_correctors)
    te = tensor_from_energy(coarse_correctors)
    assert route_gap(tf, te) < 1e-6
    assert te.major_defect() < 1e-12
    assert te.cross_defect() < 1e-9
    assert tf.major_defect() < 1e-6


def test_ellipticity_bound(coarse_correctors):
    te = tensor_from_energy(coarse_correctors)
    mn, bound, ok = check_ellipticity(te, coarse_correctors.params, n_samples=2000)
    assert ok and mn >= bound


def test_trace_free_response_is_unchanged_by_matching_inclusions(coarse_cell):
    # mu~ = mu: trace-free strains see a homogeneous medium, so a E = lame E
    p = MaterialParams(1.0, 1.0, 1.0)
    t = tensor_from_energy(solve_cell_problems(coarse_cell, p))
    L = lame_entries(p.lam, p.mu)
    for E in (np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])):
        got = np.einsum("ijab,jb->ia", t.entries, E)
        ref = np.einsum("ijab,jb->ia", L, E)
        assert np.allclose(got, ref, atol=1e-10)


def test_incompressible_inclusions_stiffen_bulk_response(coarse_correctors):
    p = coarse_correctors.params
    t = tensor_from_energy(coarse_correctors)
    I = np.eye(2)
    bulk = np.einsum("ijab,ia,jb->", t.entries, I, I)
    assert bulk > np.einsum("ijab,ia,jb->", lame_entries(p.lam, p.mu), I, I)


@settings(max_examples=50, deadline=None)
@given(angles, angles, st.floats(0.0, 3.0), st.floats(0.1, 3.0))
def test_lame_rank_one_closed_form(a, b, lam, mu):
    # Q(xi, eta) = mu + (lam + mu)(xi . eta)^2 for an isotropic solid
    t = HomogenizedTensor.lame(lam, mu)
    xi = np.array([[np.cos(a), np.sin(a)]])
    eta = np.array([[np.cos(b), np.sin(b)]])
    q = t.rank_one(xi, eta)[0]
    assert q == pytest.approx(mu + (lam + mu) * np.cos(a - b) ** 2, rel=1e-12, abs=1e-12)


def test_ellipticity_minimum_of_lame():
    t = HomogenizedTensor.lame(1.0, 0.5)
    mn, _, _ = check_ellipticity(t, MaterialParams(1.0, 0.5, 1.0), n_samples=256)
    assert mn == pytest.approx(0.5, abs=1e-9)


def test_stiffness_layout():
    t = HomogenizedTensor.lame(1.0, 2.0)
    from cell2macro.fem import lame_tensor
    assert np.allclose(t.stiffness(), lame_tensor(1.0, 2.0))


def test_report_contents(coarse_correctors):
    rep = tensor_report(coarse_correctors, n_samples=256)
    assert set(rep["energy"]) == {f"{i}{j}{a}{b}" for i in "12" for j in "12"
                                  for a in "12" for b in "12"}
    assert rep["ellipticity"]["pass"]
    fm = flux_mean(coarse_correctors, tensor_from_energy(coarse_correctors))
    assert fm["with_pressure"] < 1e-10
