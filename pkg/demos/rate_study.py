"""Convergence of the first-order corrector error for several data sets.

Runs the acceptance geometry (disk of radius 1/2, disk inclusions of radius
1/4, eps = 1/4, 1/8, 1/16) for three choices of viscosity and boundary
stress and prints the error table and fitted rates of both variants.

With lam = mu = mu~ = 1 and the trace-free stress diag(1, -1) the composite
solution is exactly the homogeneous linear field, so every error is at
roundoff level and no rate can be read.  Changing mu~ or giving the stress a
trace makes the inclusions visible and the plain error decays like eps^(1/2).

Usage: python demos/rate_study.py [output_dir]
"""
import sys
import time
from pathlib import Path

from cell2macro.errors import FlatData
from cell2macro.study import StudyConfig, run_study

BASE = {
    "domain": {"kind": "disk", "size": 0.5},
    "inclusion": {"kind": "disk", "center": [0.0, 0.0], "size": 0.25},
    "eps_list": [1 / 4, 1 / 8, 1 / 16],
    "h_cell": 1 / 64,
    "h_domain_rule": "eps/8",
    "variants": ["plain", "mollified"],
}

CASES = {
    "matching_viscosity": ({"lambda": 1.0, "mu": 1.0, "mu_tilde": 1.0},
                           [[1.0, 0.0], [0.0, -1.0]]),
    "stiff_viscosity": ({"lambda": 1.0, "mu": 1.0, "mu_tilde": 2.0},
                        [[1.0, 0.0], [0.0, -1.0]]),
    "isotropic_stress": ({"lambda": 1.0, "mu": 1.0, "mu_tilde": 1.0},
                         [[1.0, 0.0], [0.0, 1.0]]),
}


def main(out_root="demo_out"):
    root = Path(out_root)
    cache = root / "cache"
    for name, (params, S) in CASES.items():
        cfg = StudyConfig.from_dict({**BASE, "params": params, "cache_dir": str(cache),
                                     "g": {"kind": "equilibrated_linear", "S": S}})
        t0 = time.perf_counter()
        try:
            rep = run_study(cfg, root / name)
        except FlatData as exc:
            rep = exc.report
        print(f"\n{name}: params={params} S={S} ({time.perf_counter() - t0:.0f}s)")
        print(f"{'eps':>8} {'plain':>12} {'mollified':>12}")
        for r in rep.rows:
            print(f"{r['eps']:8.4f} {r['err_plain']:12.4e} {r['err_mollified']:12.4e}")
        for v, f in rep.fits.items():
            if f["flat"]:
                print(f"  {v}: flat data, no rate")
            else:
                print(f"  {v}: alpha = {f['alpha']:.3f}  (fit residual {f['residual']:.3f})")


if __name__ == "__main__":
    main(*sys.argv[1:])
