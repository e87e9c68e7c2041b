"""Command-line entry point ``cell2macro``.

Exit codes: 0 all checks pass, 2 a check failed, 3 the configuration is invalid.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cell import SOLVABILITY_TOL, load_or_solve
from .errors import Cell2MacroError, ConfigError, FlatData, InvalidParams, InvalidShape
from .homogenize import tensor_report
from .study import StudyConfig, run_study, verify_suite

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 2, 3
log = logging.getLogger("cell2macro")


def _load(path) -> StudyConfig:
    return StudyConfig.from_json(path)


def _out(cfg: StudyConfig, override) -> Path:
    return Path(override) if override else Path(cfg.output_dir)


def cmd_solve_cell(cfg: StudyConfig, args) -> int:
    out = _out(cfg, args.out)
    cache = Path(cfg.cache_dir) if cfg.cache_dir else out / "cache"
    cs = load_or_solve(cache, cfg.inclusion, cfg.h_cell, cfg.params)
    ok = True
    for key, d in cs.diagnostics.get("pairs", {}).items():
        good = (d["solvability_defect"] < SOLVABILITY_TOL * d["solvability_scale"]
                and d["relative_residual"] <= 1e-9)
        ok &= good
        print(f"chi^{key}: residual {d['relative_residual']:.2e} "
              f"defect {d['solvability_defect']:.2e} {'ok' if good else 'FAIL'}")
    print(f"correctors cached under {cache}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_tensor(cfg: StudyConfig, args) -> int:
    out = _out(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(cfg.cache_dir) if cfg.cache_dir else out / "cache"
    cs = load_or_solve(cache, cfg.inclusion, cfg.h_cell, cfg.params)
    rep = tensor_report(cs, seed=cfg.seed)
    (out / "ahat.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    for k, v in sorted(rep["energy"].items()):
        print(f"a_{k} = {v: .10f}")
    sym = rep["symmetry"]
    ok = (rep["route_gap"] < 1e-6 and sym["energy_major"] < 1e-9 and sym["energy_cross"] < 1e-9
          and sym["formula_major"] < 1e-6 and sym["formula_cross"] < 1e-6
          and rep["ellipticity"]["pass"])
    print(f"route gap {rep['route_gap']:.2e}, ellipticity min "
          f"{rep['ellipticity']['min_energy']:.6f} >= {rep['ellipticity']['bound']:.6f}: "
          f"{'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_study(cfg: StudyConfig, args) -> int:
    out = _out(cfg, args.out)
    try:
        report = run_study(cfg, out)
    except FlatData as exc:
        print(f"rate fit rejected: {exc}")
        return EXIT_CHECK
    for r in report.rows:
        print("eps={eps:.6g} plain={p} mollified={m}".format(
            eps=r["eps"], p=r["err_plain"], m=r["err_mollified"]))
    for v, f in report.fits.items():
        print(f"{v}: alpha={f['alpha']:.4f} residual={f['residual']:.3e}")
    print(f"reports written to {out}")
    return EXIT_OK


def cmd_verify(cfg: StudyConfig, args) -> int:
    out = _out(cfg, args.out)
    ledger = verify_suite(cfg, out, log=log.info)
    for e in ledger:
        print(f"{'PASS' if e['pass'] else 'FAIL'} {e['name']} measured={e['measured']} "
              f"bound={e['bound']}")
    n_fail = sum(not e["pass"] for e in ledger)
    print(f"{len(ledger) - n_fail}/{len(ledger)} checks pass; ledger at {out / 'ledger.json'}")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK


COMMANDS = {"solve-cell": cmd_solve_cell, "tensor": cmd_tensor,
            "study": cmd_study, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cell2macro",
                                 description="Periodic homogenization of an elastic matrix "
                                             "with incompressible inclusions.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = _load(args.config)
    except (ConfigError, InvalidParams, InvalidShape) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except Cell2MacroError as exc:
        print(f"check failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
