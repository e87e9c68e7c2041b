"""Configuration-driven convergence study and the invariant ledger.

A study runs cell solve -> homogenized tensor -> u0 -> eps sweep ->
corrector errors -> log-log rate fit and writes plain-text reports.
``verify_suite`` evaluates the module invariants and writes ``ledger.json``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cell import (INDEX_PAIRS, CellProblem, CellCorrectorSet, check_solvability,
                   grad_sup_norm, load_or_solve, solve_cell_problems)
from .corrector import (CutoffEta, MollifierKernel, build_w_eps, check_cutoff_on_mesh,
                        convolve, mollification_gap)
from .eps_problem import (NeumannData, h2_norm, lame_strain_for_stress, linear_field,
                          solve_eps, solve_homogenized)
from .errors import Cell2MacroError, ConfigError, FlatData
from .fem import MaterialParams, assemble_h1_gram, assemble_p1_mass, h1_norm
from .geometry import (DomainShape, InclusionShape, build_domain_mesh, build_plain_mesh,
                       build_unit_cell_mesh)
from .homogenize import (HomogenizedTensor, check_ellipticity, route_gap, tensor_from_energy,
                         tensor_from_formula, tensor_report)
from .saddle import estimate_inf_sup, inf_sup_dense

VARIANTS = ("plain", "mollified")
FLAT_TOL = 1e-14
RESULT_COLUMNS = ("eps", "h_domain", "err_plain", "err_mollified", "u0_h2", "ratio_prev")
ELLIPTICITY_SETS = ((1.0, 1.0, 1.0), (1.0, 0.5, 2.0), (0.2, 1.0, 0.1))


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def parse_h_rule(rule) -> float:
    """Divisor ``k`` of a rule ``"eps/k"``; a bare number is read the same way."""
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        k = float(rule)
    else:
        m = re.fullmatch(r"\s*eps\s*/\s*([0-9]*\.?[0-9]+)\s*", str(rule))
        if not m:
            raise ConfigError(f"h_domain_rule must look like 'eps/8', got {rule!r}")
        k = float(m.group(1))
    if not k >= 4:
        raise ConfigError(f"h_domain_rule divisor must be at least 4, got {k}")
    return k


@dataclass
class StudyConfig:
    domain: DomainShape = field(default_factory=DomainShape)
    inclusion: InclusionShape = field(default_factory=InclusionShape)
    params: MaterialParams = field(default_factory=lambda: MaterialParams(1.0, 1.0, 1.0))
    g: dict = field(default_factory=lambda: {"kind": "equilibrated_linear",
                                             "S": [[1.0, 0.0], [0.0, -1.0]]})
    eps_list: list = field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16])
    h_cell: float = 1 / 64
    h_domain_rule: str = "eps/8"
    h_u0: float | None = None
    variants: list = field(default_factory=lambda: list(VARIANTS))
    output_dir: str = "study_out"
    cache_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        eps = [float(e) for e in self.eps_list]
        if len(eps) < 3:
            raise ConfigError(f"need at least 3 eps values for a rate fit, got {len(eps)}")
        if any(not 0 < e < 1 for e in eps):
            raise ConfigError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
        self.eps_list = eps
        if not self.h_cell > 0:
            raise ConfigError("h_cell must be positive")
        parse_h_rule(self.h_domain_rule)
        if self.h_u0 is not None and not self.h_u0 > 0:
            raise ConfigError("h_u0 must be positive")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"variants must be a non-empty subset of {VARIANTS}")
        try:
            NeumannData.from_config(self.g)
        except (ValueError, Cell2MacroError) as exc:
            raise ConfigError(f"bad traction: {exc}") from exc

    @property
    def h_divisor(self) -> float:
        return parse_h_rule(self.h_domain_rule)

    def h_domain(self, eps: float) -> float:
        return eps / self.h_divisor

    @property
    def u0_h(self) -> float:
        return self.h_u0 if self.h_u0 is not None else min(self.eps_list) / 8

    @property
    def traction(self) -> NeumannData:
        return NeumannData.from_config(self.g)

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        """Build from a JSON-style dict.  Shape and parameter errors propagate
        as their own types; everything else becomes :class:`ConfigError`."""
        d = dict(d)
        known = {"domain", "inclusion", "params", "g", "eps_list", "h_cell",
                 "h_domain_rule", "h_u0", "variants", "output_dir", "cache_dir", "seed"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        try:
            if "domain" in d:
                kw["domain"] = DomainShape(**d["domain"])
            if "inclusion" in d:
                inc = dict(d["inclusion"])
                if "center" in inc:
                    inc["center"] = tuple(float(c) for c in inc["center"])
                kw["inclusion"] = InclusionShape(**inc)
            if "params" in d:
                p = d["params"]
                kw["params"] = MaterialParams(float(p["lambda"]), float(p["mu"]),
                                              float(p["mu_tilde"]))
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config entry: {exc}") from exc
        for k in ("g", "eps_list", "h_cell", "h_domain_rule", "h_u0", "variants",
                  "output_dir", "cache_dir", "seed"):
            if k in d:
                kw[k] = d[k]
        kw["inclusion"] = kw.get("inclusion", InclusionShape())
        kw["inclusion"].validate()
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def as_dict(self) -> dict:
        inc = self.inclusion
        return {
            "domain": {"kind": self.domain.kind, "size": self.domain.size},
            "inclusion": {"kind": inc.kind, "center": [float(c) for c in inc.center],
                          "size": inc.size},
            "params": self.params.as_dict(),
            "g": self.g,
            "eps_list": self.eps_list,
            "h_cell": self.h_cell,
            "h_domain_rule": self.h_domain_rule,
            "h_u0": self.u0_h,
            "variants": list(self.variants),
            "seed": self.seed,
        }


# --------------------------------------------------------------------------
# rate fit
# --------------------------------------------------------------------------

def fit_rate(pairs):
    """Least-squares fit of log e = alpha log eps + c.

    Returns ``(alpha, intercept, residual)`` with the residual the RMS of
    the log-space misfit.  Raises :class:`FlatData` when any error is at or
    below 1e-14, since no rate can be read from roundoff.
    """
    pairs = [(float(e), float(r)) for e, r in pairs]
    if len(pairs) < 2:
        raise ValueError("need at least two (eps, error) pairs")
    eps = np.array([p[0] for p in pairs])
    err = np.array([p[1] for p in pairs])
    if np.any(eps <= 0):
        raise ValueError("eps must be positive")
    if np.any(~np.isfinite(err)) or np.any(err <= FLAT_TOL):
        raise FlatData(f"errors at roundoff level, no rate can be fitted: {err.tolist()}")
    X = np.column_stack([np.log(eps), np.ones_like(eps)])
    y = np.log(err)
    (alpha, c), *_ = np.linalg.lstsq(X, y, rcond=None)
    res = float(np.sqrt(np.mean((X @ [alpha, c] - y) ** 2)))
    return float(alpha), float(c), res


# --------------------------------------------------------------------------
# study
# --------------------------------------------------------------------------

@dataclass
class RateReport:
    rows: list
    fits: dict
    diagnostics: dict

    def fit(self, variant: str) -> dict:
        return self.fits[variant]

    def table(self, variant: str) -> list:
        return [(r["eps"], r[f"err_{variant}"]) for r in self.rows]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def results_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


class _Stage:
    """Attach the pipeline stage to any error raised inside the block."""

    def __init__(self, name: str, log: dict):
        self.name, self.log = name, log

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, typ, exc, tb):
        self.log.setdefault("timings", {})[self.name] = time.perf_counter() - self.t0
        if exc is not None and not hasattr(exc, "stage"):
            exc.stage = self.name
            exc.args = (f"[{self.name}] " + (str(exc.args[0]) if exc.args else ""),) + exc.args[1:]
        return False


def _fit_variant(rows, variant):
    vals = [r[f"err_{variant}"] for r in rows]
    entry = {"n_points": len(rows),
             "monotone": bool(all(b < a for a, b in zip(vals, vals[1:])))}
    try:
        a, c, res = fit_rate([(r["eps"], r[f"err_{variant}"]) for r in rows])
        entry.update(alpha=a, intercept=c, residual=res, flat=False)
    except FlatData as exc:
        entry.update(alpha=None, intercept=None, residual=None, flat=True, reason=str(exc))
    return entry


def run_study(config: StudyConfig, out_dir=None) -> RateReport:
    """Full pipeline for every eps of the config; writes the report files.

    Files: ``results.csv``, ``rate.json``, ``ahat.json``, ``study_meta.json``
    and one ``eps_<k>/solution_meta.json`` per sweep entry.  Correctors are
    cached under ``cache_dir`` (default ``<out>/cache``).  ``results.csv`` is
    rewritten after every eps so partial results survive a failure.
    Raises :class:`FlatData` after writing all files when a requested
    variant has errors at roundoff level.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(config.cache_dir) if config.cache_dir else out / "cache"
    log: dict = {"config": config.as_dict(), "conforming": config.domain.conforming}
    g = config.traction
    p = config.params

    with _Stage("homogenized_tensor", log):
        cs_fine = load_or_solve(cache, config.inclusion, config.h_cell, p)
        rep = tensor_report(cs_fine, seed=config.seed)
        _write_json(out / "ahat.json", rep)
        t = tensor_from_energy(cs_fine)
    with _Stage("u0", log):
        u0_mesh = build_plain_mesh(config.domain, config.u0_h)
        u0, d0 = solve_homogenized(u0_mesh, t, g, return_diagnostics=True)
        u0_h2 = h2_norm(u0)
        log["u0"] = {**d0, "h2_norm": u0_h2, "h1_norm": h1_norm(u0)}

    rows, per_eps = [], []
    for k, eps in enumerate(config.eps_list):
        h = config.h_domain(eps)
        info = {"eps": eps, "h_domain": h}
        with _Stage(f"eps[{k}]", log):
            mesh = build_domain_mesh(config.domain, eps, config.inclusion, h)
            cs = load_or_solve(cache, config.inclusion, mesh.cell_mesh.h_target, p,
                               mesh=mesh.cell_mesh)
            sol = solve_eps(mesh, p, g)
            eta = CutoffEta(eps, config.domain)
            kernel = MollifierKernel(eps)
            info["cutoff"] = check_cutoff_on_mesh(mesh, eta)
            w = {}
            for v in VARIANTS:
                if v in config.variants:
                    w[v] = build_w_eps(sol.u_eps, u0, cs, eta, kernel, mesh, v)
            row = {"eps": eps, "h_domain": h, "u0_h2": u0_h2}
            for v in VARIANTS:
                row[f"err_{v}"] = w[v].h1_norm() if v in w else None
            if len(w) == 2:
                info["mollification_gap"] = mollification_gap(w["plain"], w["mollified"])
            info["mollified"] = w["mollified"].info if "mollified" in w else None
            info["solution"] = sol.diagnostics
            info["cell_h"] = mesh.cell_mesh.h_target
        prev = rows[-1] if rows else None
        key = f"err_{config.variants[0]}"
        row["ratio_prev"] = prev[key] / row[key] if prev and row[key] else None
        rows.append(row)
        per_eps.append(info)
        d = out / f"eps_{k}"
        d.mkdir(exist_ok=True)
        _write_json(d / "solution_meta.json", info)
        (out / "results.csv").write_text(results_csv(rows))

    fits = {v: _fit_variant(rows, v) for v in config.variants}
    first = fits[config.variants[0]]
    rate = {"alpha": first["alpha"], "intercept": first["intercept"],
            "residual": first["residual"], "n_points": first["n_points"],
            "variant": config.variants[0], "variants": fits}
    _write_json(out / "rate.json", rate)
    log["eps"] = [{"eps": i["eps"], "n_cells": i["solution"]["n_cells"]} for i in per_eps]
    _write_json(out / "study_meta.json", log)
    report = RateReport(rows, fits, log)
    flat = [v for v, f in fits.items() if f["flat"]]
    if flat:
        exc = FlatData(f"[rate_fit] flat error data for variants {flat}")
        exc.stage = "rate_fit"
        exc.report = report
        raise exc
    return report


# --------------------------------------------------------------------------
# individual checks
# --------------------------------------------------------------------------

def _entry(name, measured, bound, passed, **extra) -> dict:
    return {"name": name, "measured": measured, "bound": bound, "pass": bool(passed), **extra}


def check_tensor(cs: CellCorrectorSet, seed: int = 0) -> list:
    """Route agreement, symmetries and ellipticity of one corrector set."""
    tf = tensor_from_formula(cs)
    te = tensor_from_energy(cs)
    gap = route_gap(tf, te)
    tag = "lam={lambda},mu={mu},mu_tilde={mu_tilde}".format(**cs.params.as_dict())
    mn, bound, ok = check_ellipticity(te, cs.params, seed=seed)
    out = [
        _entry(f"tensor.route_gap[{tag}]", gap, 1e-6, gap < 1e-6),
        _entry(f"tensor.energy_major[{tag}]", te.major_defect(), 1e-9, te.major_defect() < 1e-9),
        _entry(f"tensor.energy_cross[{tag}]", te.cross_defect(), 1e-9, te.cross_defect() < 1e-9),
        _entry(f"tensor.formula_major[{tag}]", tf.major_defect(), 1e-6, tf.major_defect() < 1e-6),
        _entry(f"tensor.formula_cross[{tag}]", tf.cross_defect(), 1e-6, tf.cross_defect() < 1e-6),
        _entry(f"tensor.ellipticity[{tag}]", mn, bound - 1e-9, ok),
    ]
    return out


def check_solvability_all(mesh, params: MaterialParams) -> list:
    tag = "lam={lambda},mu={mu},mu_tilde={mu_tilde}".format(**params.as_dict())
    out = []
    for i, j in INDEX_PAIRS:
        d, s = check_solvability(mesh, params, i, j)
        out.append(_entry(f"cell.solvability[{i}{j},{tag}]", d, 1e-10 * s, d < 1e-10 * s))
    return out


def check_cell_solution(cs: CellCorrectorSet) -> list:
    """Residual contract and constraint satisfaction of the cell solves."""
    tag = "h={:.6g},lam={lambda},mu={mu},mu_tilde={mu_tilde}".format(
        cs.mesh.h_target, **cs.params.as_dict())
    out = []
    for key, d in cs.diagnostics.get("pairs", {}).items():
        rel = d["relative_residual"]
        out.append(_entry(f"saddle.residual[cell {key},{tag}]", rel, 1e-9, rel <= 1e-9))
    return out


def inf_sup_levels(shape: InclusionShape, params: MaterialParams,
                   hs=(1 / 8, 1 / 16, 1 / 32), seed: int = 0) -> dict:
    """Inf-sup estimates on nested cell meshes plus the dense oracle on the coarsest."""
    betas, dense = [], None
    for k, h in enumerate(hs):
        m = build_unit_cell_mesh(shape, h)
        prob = CellProblem.build(m, params)
        s = prob.system()
        Mu = assemble_h1_gram(prob.space)
        Mp = assemble_p1_mass(prob.pspace)
        betas.append(estimate_inf_sup(s, Mu, Mp, seed=seed))
        if k == 0:
            dense = inf_sup_dense(s, Mu, Mp)
    return {"h": list(hs), "beta": betas, "dense": dense}


def check_inf_sup(data: dict) -> list:
    b = np.array(data["beta"])
    var = float((b.max() - b.min()) / b.max())
    oracle = abs(b[0] - data["dense"]) / data["dense"]
    return [
        _entry("saddle.inf_sup_variation", var, 0.25, var < 0.25, beta=b.tolist()),
        _entry("saddle.inf_sup_min", float(b.min()), 0.05, b.min() > 0.05),
        _entry("saddle.inf_sup_dense_oracle", float(oracle), 1e-6, oracle < 1e-6,
               dense=data["dense"]),
    ]


def mollifier_study(eps_list=(1 / 8, 1 / 16, 1 / 32), domain: DomainShape | None = None,
                    n_grid: int = 200) -> dict:
    """Interior L2 error of S_eps on f = sin(pi x1), with the analytic f.

    The interior is the set of grid points at least eps/2 from the boundary,
    so the zero extension outside the domain never enters.
    """
    domain = domain or DomainShape("disk", 0.5)
    s = domain.size
    xs = (np.arange(n_grid) + 0.5) / n_grid * 2 * s - s
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    cell = (2 * s / n_grid) ** 2
    f = lambda q: np.sin(np.pi * q[:, 0])
    out = {"eps": list(eps_list), "error": [], "grad_norm": [], "const": [], "linear": []}
    for eps in eps_list:
        k = MollifierKernel(eps)
        inner = pts[domain.contains(pts) & (domain.distance(pts) >= eps / 2)]
        sf = convolve(f, inner, k)
        err = math.sqrt(cell * float(np.sum((sf - f(inner)) ** 2)))
        gn = math.sqrt(cell * float(np.sum((np.pi * np.cos(np.pi * inner[:, 0])) ** 2)))
        const = float(np.max(np.abs(convolve(lambda q: np.full(len(q), 3.5), inner, k) - 3.5)))
        lin = float(np.max(np.abs(convolve(lambda q: q[:, 0], inner, k) - inner[:, 0])))
        out["error"].append(err)
        out["grad_norm"].append(gn)
        out["const"].append(max(const, abs(k.mass - 1.0)))
        out["linear"].append(lin)
    out["order"] = fit_rate(list(zip(eps_list, out["error"])))[0]
    return out


def check_mollifier(data: dict) -> list:
    const = max(data["const"])
    ratio = max(e / (eps * g) for e, eps, g in zip(data["error"], data["eps"], data["grad_norm"]))
    return [
        _entry("mollifier.constants", const, 1e-12, const <= 1e-12),
        _entry("mollifier.linear_exact", max(data["linear"]), 1e-10, max(data["linear"]) < 1e-10),
        _entry("mollifier.order", data["order"], 0.9, data["order"] >= 0.9),
        _entry("mollifier.constant_vs_eps_grad", ratio, 1.0, ratio <= 1.0),
    ]


def check_cutoff(config: StudyConfig) -> list:
    """Cutoff plateau and slope checks on every study mesh."""
    out = []
    for eps in config.eps_list:
        mesh = build_domain_mesh(config.domain, eps, config.inclusion, config.h_domain(eps))
        r = check_cutoff_on_mesh(mesh, CutoffEta(eps, config.domain))
        out.append(_entry(f"corrector.cutoff[eps={eps:.6g}]", r["max_slope"], r["slope_bound"],
                          r["pass"], plateau_inner=r["plateau_inner"],
                          plateau_outer=r["plateau_outer"], range=r["range"]))
    return out


def sup_norm_study(shape: InclusionShape, params: MaterialParams,
                   hs=(1 / 64, 1 / 128), cache_dir=None) -> dict:
    norms = []
    for h in hs:
        cs = load_or_solve(cache_dir, shape, h, params)
        norms.append({f"{i}{j}": grad_sup_norm(cs.chi[(i, j)]) for i, j in INDEX_PAIRS})
        del cs
    return {"h": list(hs), "norms": norms}


def check_sup_norms(data: dict, zero_floor: float = 1e-12) -> list:
    """Relative change of grad_sup_norm between two cell resolutions.

    A pair whose norm is below ``zero_floor`` times the largest norm at both
    levels is identically zero up to roundoff and passes with change 0.
    """
    a, b = data["norms"]
    top = max(max(a.values()), max(b.values()))
    out = []
    for key in a:
        if max(a[key], b[key]) < zero_floor * top:
            change = 0.0
        else:
            change = abs(b[key] - a[key]) / max(a[key], b[key])
        out.append(_entry(f"cell.grad_sup_change[{key}]", change, 0.10, change < 0.10,
                          values=[a[key], b[key]]))
    return out


def manufactured_errors(params: MaterialParams, S, domain: DomainShape | None = None,
                        eps: float = 1 / 4, h: float = 1 / 16) -> dict:
    """H1 errors of the eps solver and the homogenized solver on a constant stress field
    in a domain without inclusions."""
    domain = domain or DomainShape("disk", 0.5)
    g = NeumannData.equilibrated_linear(S)
    M = lame_strain_for_stress(params, S)
    mesh = build_domain_mesh(domain, eps, None, h)
    sol = solve_eps(mesh, params, g)
    e1 = h1_norm(sol.u_eps - linear_field(sol.u_eps.space, M))
    u0 = solve_homogenized(mesh, HomogenizedTensor.lame(params.lam, params.mu), g)
    e2 = h1_norm(u0 - linear_field(u0.space, M))
    return {"eps_solver": e1, "homogenized_solver": e2, "M": M.tolist()}


def check_manufactured(data: dict) -> list:
    return [_entry(f"eps_problem.manufactured[{k}]", data[k], 1e-8, data[k] < 1e-8)
            for k in ("eps_solver", "homogenized_solver")]


def check_determinism_and_cache(shape: InclusionShape, params: MaterialParams,
                                h: float = 1 / 16) -> list:
    """Two cold solves are bit-identical; a cache round trip changes nothing."""
    mesh = build_unit_cell_mesh(shape, h)
    a = solve_cell_problems(mesh, params)
    b = solve_cell_problems(build_unit_cell_mesh(shape, h), params)
    det = max(float(np.max(np.abs(a.chi[p].coefficients - b.chi[p].coefficients)))
              for p in INDEX_PAIRS)
    with tempfile.TemporaryDirectory() as tmp:
        load_or_solve(tmp, shape, h, params, mesh=mesh)
        c = load_or_solve(tmp, shape, h, params, mesh=mesh)
        loaded = bool(c.diagnostics.get("loaded_from_cache"))
        cache = max(float(np.max(np.abs(a.chi[p].coefficients - c.chi[p].coefficients)))
                    for p in INDEX_PAIRS)
        cache = max(cache, float(np.max(np.abs(tensor_from_energy(a).entries
                                                - tensor_from_energy(c).entries))))
    return [
        _entry("harness.determinism", det, 0.0, det == 0.0),
        _entry("harness.cache_consistency", cache, 1e-12, loaded and cache <= 1e-12),
    ]


# --------------------------------------------------------------------------
# ledger
# --------------------------------------------------------------------------

def verify_suite(config: StudyConfig, out_dir=None, log=None) -> list:
    """Evaluate the invariant checks and write ``ledger.json``.

    Failures become ledger entries; only configuration errors raise.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(config.cache_dir) if config.cache_dir else out / "cache"
    ledger: list = []
    say = log or (lambda msg: None)

    def run(name, fn):
        t0 = time.perf_counter()
        try:
            ledger.extend(fn())
        except Exception as exc:  # noqa: BLE001 - failures are ledger entries
            ledger.append(_entry(name, None, None, False, error=f"{type(exc).__name__}: {exc}"))
        say(f"{name}: {time.perf_counter() - t0:.1f}s")

    shape = config.inclusion
    p = config.params
    sets = [p] + [MaterialParams(*v) for v in ELLIPTICITY_SETS
                  if v != (p.lam, p.mu, p.mu_tilde)]
    cell = build_unit_cell_mesh(shape, config.h_cell)

    def tensors():
        res = []
        for q in sets:
            cs = load_or_solve(cache, shape, config.h_cell, q, mesh=cell)
            res += check_tensor(cs, config.seed) + check_cell_solution(cs)
        return res

    run("tensor", tensors)
    run("solvability", lambda: sum((check_solvability_all(cell, q) for q in sets), []))
    run("inf_sup", lambda: check_inf_sup(inf_sup_levels(shape, p, seed=config.seed)))
    run("mollifier", lambda: check_mollifier(mollifier_study()))
    run("cutoff", lambda: check_cutoff(config))
    run("grad_sup", lambda: check_sup_norms(
        sup_norm_study(shape, p, (config.h_cell, config.h_cell / 2), cache)))
    run("manufactured", lambda: check_manufactured(
        manufactured_errors(p, [[1.0, 0.25], [0.25, -0.5]], config.domain)))
    run("determinism", lambda: check_determinism_and_cache(shape, p))
    _write_json(out / "ledger.json", ledger)
    return ledger
