"""One test per acceptance criterion, each at its stated tolerance.

Every test appends a PASS/FAIL line that is printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from cell2macro.cell import INDEX_PAIRS, check_solvability, load_or_solve
from cell2macro.fem import MaterialParams
from cell2macro.geometry import DomainShape, InclusionShape, build_unit_cell_mesh
from cell2macro.homogenize import (check_ellipticity, route_gap, tensor_from_energy,
                                   tensor_from_formula)
from cell2macro.study import (ELLIPTICITY_SETS, StudyConfig, check_cutoff, check_inf_sup,
                              check_manufactured, check_mollifier, check_sup_norms,
                              inf_sup_levels, manufactured_errors, mollifier_study, run_study,
                              sup_norm_study, verify_suite)

ACCEPTANCE = {
    "domain": {"kind": "disk", "size": 0.5},
    "inclusion": {"kind": "disk", "center": [0.0, 0.0], "size": 0.25},
    "params": {"lambda": 1.0, "mu": 1.0, "mu_tilde": 1.0},
    "g": {"kind": "equilibrated_linear", "S": [[1.0, 0.0], [0.0, -1.0]]},
    "eps_list": [1 / 4, 1 / 8, 1 / 16],
    "h_cell": 1 / 64,
    "h_domain_rule": "eps/8",
    "variants": ["plain", "mollified"],
    "seed": 0,
}


def record(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_cache")


@pytest.fixture(scope="module")
def config(cache):
    return StudyConfig.from_dict({**ACCEPTANCE, "cache_dir": str(cache)})


@pytest.fixture(scope="module")
def corrector_sets(config, cache):
    mesh = build_unit_cell_mesh(config.inclusion, config.h_cell)
    return {v: load_or_solve(cache, config.inclusion, config.h_cell, MaterialParams(*v), mesh)
            for v in ELLIPTICITY_SETS}


def test_criterion_01_convergence_rate(config, tmp_path):
    t0 = time.perf_counter()
    report = run_study(config, tmp_path)
    elapsed = time.perf_counter() - t0
    parts, ok = [], elapsed <= 900
    for v in ("plain", "mollified"):
        f = report.fit(v)
        good = 0.40 <= f["alpha"] <= 0.75 and f["residual"] < 0.1
        ok &= good
        errs = ", ".join(f"{e:.3e}" for _, e in report.table(v))
        parts.append(f"{v}: alpha={f['alpha']:.3f} residual={f['residual']:.3f} "
                     f"errors=[{errs}]")
    record(1, ok, "; ".join(parts) + f"; runtime {elapsed:.0f}s")
    for v in ("plain", "mollified"):
        f = report.fit(v)
        assert 0.40 <= f["alpha"] <= 0.75, f"{v} rate {f['alpha']} outside [0.40, 0.75]"
        assert f["residual"] < 0.1
    assert elapsed <= 900


def test_criterion_02_route_agreement(corrector_sets):
    cs = corrector_sets[(1.0, 1.0, 1.0)]
    gap = route_gap(tensor_from_formula(cs), tensor_from_energy(cs))
    record(2, gap < 1e-6, f"max relative entry gap {gap:.2e} (< 1e-6) at h_cell=1/64")
    assert gap < 1e-6


def test_criterion_03_symmetries(corrector_sets):
    cs = corrector_sets[(1.0, 1.0, 1.0)]
    te, tf = tensor_from_energy(cs), tensor_from_formula(cs)
    d = {"energy_major": te.major_defect(), "energy_cross": te.cross_defect(),
         "formula_major": tf.major_defect(), "formula_cross": tf.cross_defect()}
    ok = (d["energy_major"] < 1e-9 and d["energy_cross"] < 1e-9
          and d["formula_major"] < 1e-6 and d["formula_cross"] < 1e-6)
    record(3, ok, ", ".join(f"{k}={v:.1e}" for k, v in d.items()))
    assert ok


def test_criterion_04_ellipticity(corrector_sets):
    parts, ok = [], True
    for v, cs in corrector_sets.items():
        mn, bound, good = check_ellipticity(tensor_from_energy(cs), cs.params, 10000, seed=0)
        ok &= good and mn >= bound - 1e-9
        parts.append(f"{v}: min {mn:.4f} >= {bound:.4f}")
    record(4, ok, "; ".join(parts))
    assert ok


def test_criterion_05_cell_solvability(config):
    mesh = build_unit_cell_mesh(config.inclusion, config.h_cell)
    worst, ok = 0.0, True
    for v in ELLIPTICITY_SETS:
        for i, j in INDEX_PAIRS:
            d, s = check_solvability(mesh, MaterialParams(*v), i, j)
            ok &= d < 1e-10 * s
            worst = max(worst, d / s)
    record(5, ok, f"worst defect/scale {worst:.1e} (< 1e-10) over 3 pairs x 3 parameter sets")
    assert ok


def test_criterion_06_inf_sup(config):
    data = inf_sup_levels(config.inclusion, config.params)
    res = check_inf_sup(data)
    ok = all(e["pass"] for e in res)
    record(6, ok, "beta_h=" + ", ".join(f"{b:.4f}" for b in data["beta"])
           + f" at h=1/8,1/16,1/32; variation {res[0]['measured']:.3f}; "
             f"dense oracle {data['dense']:.6f}")
    assert ok


def test_criterion_07_mollifier():
    data = mollifier_study((1 / 8, 1 / 16, 1 / 32))
    res = check_mollifier(data)
    ok = all(e["pass"] for e in res)
    record(7, ok, f"constants to {max(data['const']):.1e}, interior L2 order "
                  f"{data['order']:.3f} (>= 0.9)")
    assert ok


def test_criterion_08_cutoff(config):
    res = check_cutoff(config)
    ok = all(e["pass"] for e in res)
    record(8, ok, "; ".join(f"{e['name'].split('[')[1][:-1]}: max|grad eta|="
                            f"{e['measured']:.3f} <= {e['bound']:.3f}" for e in res))
    assert ok


def test_criterion_09_gradient_sup_norm(config, cache):
    data = sup_norm_study(config.inclusion, config.params, (1 / 64, 1 / 128), cache)
    res = check_sup_norms(data)
    ok = all(e["pass"] for e in res)
    record(9, ok, "; ".join(f"{e['name'][-3:-1]}: {e['values'][0]:.4g} -> {e['values'][1]:.4g}"
                            f" (change {e['measured']:.2%})" for e in res))
    assert ok


def test_criterion_10_manufactured_solution():
    data = manufactured_errors(MaterialParams(1.0, 1.0, 1.0), [[1.0, 0.25], [0.25, -0.5]],
                               DomainShape("disk", 0.5))
    res = check_manufactured(data)
    ok = all(e["pass"] for e in res)
    record(10, ok, f"H1 errors: eps solver {data['eps_solver']:.1e}, homogenized "
                   f"{data['homogenized_solver']:.1e} (< 1e-8)")
    assert ok


def test_criterion_11_invariant_ledger(config, tmp_path):
    ledger = verify_suite(config, tmp_path)
    failed = [e["name"] for e in ledger if not e["pass"]]
    record(11, not failed, f"{len(ledger) - len(failed)}/{len(ledger)} ledger entries pass"
           + (f"; failing: {failed}" if failed else ""))
    assert (tmp_path / "ledger.json").exists()
    assert not failed
