import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cell2macro.cli import main
from cell2macro.errors import ConfigError, FlatData, InvalidParams
from cell2macro.study import (StudyConfig, check_sup_norms, fit_rate, parse_h_rule,
                              results_csv, run_study)

SMALL = {
    "domain": {"kind": "disk", "size": 0.5},
    "inclusion": {"kind": "disk", "center": [0, 0], "size": 0.25},
    "params": {"lambda": 1, "mu": 1, "mu_tilde": 2},
    "g": {"kind": "torque_free_poly"},
    "eps_list": [0.25, 0.2, 1 / 6],
    "h_cell": 0.125,
    "h_domain_rule": "eps/4",
    "h_u0": 1 / 16,
    "variants": ["plain", "mollified"],
    "seed": 0,
}


def test_fit_two_point_exact():
    a, c, r = fit_rate([(1 / 4, 1 / 2), (1 / 16, 1 / 4)])
    assert a == pytest.approx(0.5) and r < 1e-14


def test_fit_linear_law():
    a, c, r = fit_rate([(e, 3 * e) for e in (0.5, 0.25, 0.1)])
    assert a == pytest.approx(1.0) and c == pytest.approx(math.log(3))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_fit_under_five_percent_noise(u):
    # multiplicative noise 1 + 0.05 u with u in [0, 1]; the worst case moves the
    # slope by log(1.05) * 0.577 ~ 0.028
    eps = [1 / 4, 1 / 8, 1 / 16, 1 / 32]
    a, _, _ = fit_rate([(e, e ** 0.5 * (1 + 0.05 * v)) for e, v in zip(eps, u)])
    assert 0.42 <= a <= 0.58


def test_fit_rejects_roundoff():
    with pytest.raises(FlatData):
        fit_rate([(0.25, 0.0), (0.125, 0.0), (0.0625, 0.0)])
    with pytest.raises(ValueError):
        fit_rate([(0.25, 1.0)])


def test_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({**SMALL, "eps_list": [0.25, 0.125]})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({**SMALL, "eps_list": [0.25, 0.3, 0.1]})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({**SMALL, "variants": ["smooth"]})
    with pytest.raises(ConfigError):
        StudyConfig.from_dict({**SMALL, "colour": "red"})
    with pytest.raises(InvalidParams):
        StudyConfig.from_dict({**SMALL, "params": {"lambda": 1, "mu": 1, "mu_tilde": -1}})
    assert parse_h_rule("eps/8") == 8
    with pytest.raises(ConfigError):
        parse_h_rule("h/8")


def test_sup_norm_zero_floor():
    data = {"norms": [{"11": 1.0, "12": 3e-16, "22": 1.0}, {"11": 1.02, "12": 1e-15, "22": 0.99}]}
    res = {e["name"]: e for e in check_sup_norms(data)}
    assert res["cell.grad_sup_change[12]"]["measured"] == 0.0
    assert all(e["pass"] for e in res.values())


def test_results_csv_layout():
    text = results_csv([{"eps": 0.25, "h_domain": 0.03125, "err_plain": 0.1,
                         "err_mollified": None, "u0_h2": 1.0, "ratio_prev": None}])
    assert text.splitlines()[0] == "eps,h_domain,err_plain,err_mollified,u0_h2,ratio_prev"
    assert text.splitlines()[1] == "0.25,0.03125,0.1,,1.0,"


@pytest.fixture(scope="module")
def small_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("study")
    cfg = StudyConfig.from_dict({**SMALL, "cache_dir": str(base / "cache")})
    first = run_study(cfg, base / "a")
    second = run_study(cfg, base / "b")
    cold = run_study(StudyConfig.from_dict({**SMALL, "cache_dir": str(base / "cold")}),
                     base / "c")
    return base, first, second, cold


def test_study_outputs(small_runs):
    base, rep, _, _ = small_runs
    out = base / "a"
    for name in ("results.csv", "rate.json", "ahat.json", "study_meta.json",
                 "eps_0/solution_meta.json"):
        assert (out / name).exists()
    rate = json.loads((out / "rate.json").read_text())
    assert {"alpha", "intercept", "residual", "n_points"} <= set(rate)
    assert rate["n_points"] == 3 and math.isfinite(rate["alpha"])
    assert len(rep.rows) == 3


def test_study_is_deterministic_and_cache_consistent(small_runs):
    base, first, second, cold = small_runs
    a = (base / "a" / "results.csv").read_bytes()
    assert a == (base / "b" / "results.csv").read_bytes()
    for r1, r2 in zip(first.rows, cold.rows):
        for k in ("err_plain", "err_mollified", "u0_h2"):
            assert abs(r1[k] - r2[k]) <= 1e-12


def test_zero_traction_is_flat(tmp_path):
    cfg = StudyConfig.from_dict({**SMALL, "g": {"kind": "zero"},
                                 "cache_dir": str(tmp_path / "cache")})
    with pytest.raises(FlatData) as info:
        run_study(cfg, tmp_path / "z")
    rows = info.value.report.rows
    assert all(r["err_plain"] == 0.0 for r in rows)
    assert (tmp_path / "z" / "results.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "eps_list": [0.25, 0.125]}))
    assert main(["verify", "--config", str(bad)]) == 3
    neg = tmp_path / "neg.json"
    neg.write_text(json.dumps({**SMALL, "params": {"lambda": 1, "mu": 1, "mu_tilde": -1}}))
    assert main(["study", "--config", str(neg)]) == 3
    (tmp_path / "broken.json").write_text("{")
    assert main(["tensor", "--config", str(tmp_path / "broken.json")]) == 3
    good = tmp_path / "good.json"
    good.write_text(json.dumps({**SMALL, "output_dir": str(tmp_path / "out")}))
    assert main(["solve-cell", "--config", str(good)]) == 0
    assert main(["tensor", "--config", str(good)]) == 0
    assert (tmp_path / "out" / "ahat.json").exists()
    zero = tmp_path / "zero.json"
    zero.write_text(json.dumps({**SMALL, "g": {"kind": "zero"},
                                "output_dir": str(tmp_path / "zout")}))
    assert main(["study", "--config", str(zero)]) == 2


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "cell2macro.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "verify" in out.stdout
