import numpy as np
import pytest

from cell2macro.cell import (INDEX_PAIRS, CellCorrectorSet, cache_key, check_solvability,
                             fluid_divergence, grad_sup_norm, load_or_solve, mean_value,
                             solve_cell_problem, solve_cell_problems, unit_strain)
from cell2macro.errors import SolvabilityViolation
from cell2macro.fem import MaterialParams, P2Space
from cell2macro.geometry import build_unit_cell_mesh


def test_unit_strains_are_symmetric():
    for i, j in INDEX_PAIRS:
        E = unit_strain(i, j)
        assert np.array_equal(E, E.T)
        assert np.array_equal(unit_strain(j, i), E)


@pytest.mark.parametrize("params", [(1.0, 1.0, 1.0), (1.0, 0.5, 2.0), (0.2, 1.0, 0.1)])
def test_cell_loads_are_compatible(coarse_cell, params):
    p = MaterialParams(*params)
    for i, j in INDEX_PAIRS:
        d, s = check_solvability(coarse_cell, p, i, j)
        assert d < 1e-10 * s


def test_corrupted_load_is_detected(coarse_cell, unit_params):
    def tilt(load, V):
        # add a net force in the first direction
        out = load.copy()
        out[0::2] += 1e-3
        return out
    d, s = check_solvability(coarse_cell, unit_params, 1, 1, corrupt=tilt)
    assert d > 1e-10 * s


def test_correctors_satisfy_constraints(coarse_correctors):
    cs = coarse_correctors
    fluid_area = cs.mesh.area_of(1)
    for (i, j) in INDEX_PAIRS:
        chi = cs.chi[(i, j)]
        assert np.max(np.abs(mean_value(chi))) < 1e-13
        # fluid incompressibility of E^{ij} y + chi: div chi = -tr(E) on the fluid
        assert fluid_divergence(chi) == pytest.approx(-np.trace(unit_strain(i, j)) * fluid_area,
                                                      abs=1e-12)
        for d in cs.diagnostics["pairs"].values():
            assert d["relative_residual"] <= 1e-9


def test_pair_alias(coarse_correctors):
    cs = coarse_correctors
    assert cs.chi[(2, 1)] is cs.chi[(1, 2)]
    assert cs.r[(2, 1)] is cs.r[(1, 2)]


def test_single_solve_matches_batched(coarse_cell, coarse_correctors):
    chi, r = solve_cell_problem(coarse_cell, coarse_correctors.params, 2, 2)
    assert np.allclose(chi.coefficients, coarse_correctors.chi[(2, 2)].coefficients, atol=1e-12)
    assert np.allclose(r.coefficients, coarse_correctors.r[(2, 2)].coefficients, atol=1e-12)


def test_shear_corrector_vanishes_when_viscosity_matches_shear_modulus(coarse_cell):
    # with mu~ = mu a pure shear is already in equilibrium and divergence free
    cs = solve_cell_problems(coarse_cell, MaterialParams(1.0, 1.0, 1.0))
    assert grad_sup_norm(cs.chi[(1, 2)]) < 1e-12
    assert grad_sup_norm(cs.chi[(1, 1)]) > 0.1


def test_cache_round_trip(tmp_path, disk, coarse_cell, coarse_correctors):
    p = coarse_correctors.params
    key = cache_key(disk, 1 / 16, p)
    coarse_correctors.save(tmp_path / key)
    cs = load_or_solve(tmp_path, disk, 1 / 16, p, mesh=coarse_cell)
    assert cs.diagnostics["loaded_from_cache"]
    for pair in INDEX_PAIRS:
        assert np.array_equal(cs.chi[pair].coefficients,
                              coarse_correctors.chi[pair].coefficients)
        assert np.array_equal(cs.r[pair].coefficients, coarse_correctors.r[pair].coefficients)


def test_cache_key_depends_on_params(disk):
    assert cache_key(disk, 1 / 16, MaterialParams(1, 1, 1)) != cache_key(
        disk, 1 / 16, MaterialParams(1, 1, 2))
    assert cache_key(disk, 1 / 16, MaterialParams(1, 1, 1)) != cache_key(
        disk, 1 / 32, MaterialParams(1, 1, 1))


def test_sup_norm_stable_under_refinement(disk):
    p = MaterialParams(1.0, 0.5, 2.0)
    a = solve_cell_problems(build_unit_cell_mesh(disk, 1 / 16), p)
    b = solve_cell_problems(build_unit_cell_mesh(disk, 1 / 32), p)
    for pair in INDEX_PAIRS:
        na, nb = grad_sup_norm(a.chi[pair]), grad_sup_norm(b.chi[pair])
        assert abs(na - nb) / max(na, nb) < 0.1


def test_zero_set(coarse_cell, unit_params):
    cs = CellCorrectorSet.zero(coarse_cell, unit_params)
    assert all(np.all(cs.chi[p].coefficients == 0) for p in INDEX_PAIRS)
    assert isinstance(cs.space, P2Space)


def test_solvability_violation_raised(monkeypatch, coarse_cell, unit_params):
    import cell2macro.cell as cell
    monkeypatch.setattr(cell, "check_solvability", lambda *a, **k: (1.0, 1.0))
    with pytest.raises(SolvabilityViolation):
        cell.solve_cell_problems(coarse_cell, unit_params)
