"""Periodic cell problems for the correctors chi^{ij} and pressures r^{ij}.

For each unit strain E = sym(e_i x e_j) the pair (chi, r) solves, for all
periodic zero-mean phi and all fluid scalars psi,

    a_Y(chi, phi) + b_Y(phi, r) = -integral of sigma_E : grad(phi)
    b_Y(chi, psi)               = -delta_ij * integral over omega of psi

where sigma_E = lam tr(E) I + 2 mu E in the matrix and 2 mu~ E in the
inclusion.  The volume form of the right-hand side is the interface
traction jump integrated by parts.

Index pairs use the 1-based labels (1,1), (1,2), (2,2); (2,1) shares the
storage of (1,2).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import textio
from .errors import SolvabilityViolation
from .fem import (FEField, MaterialParams, P1FluidSpace, P2Space, assemble_a,
                  assemble_b, grad_at_quadpoints, material_tensors,
                  p1_load, stress_load, values_at_quadpoints, zero_mean_rows,
                  RIGID_MOTIONS)
from .geometry import FLUID, CellMesh, InclusionShape, build_unit_cell_mesh
from .saddle import Factorization, SaddleSystem

INDEX_PAIRS = ((1, 1), (1, 2), (2, 2))
SOLVABILITY_TOL = 1e-10


def unit_strain(i: int, j: int) -> np.ndarray:
    """E^{ij} = (e_i x e_j + e_j x e_i)/2 for 1-based indices."""
    E = np.zeros((2, 2))
    E[i - 1, j - 1] += 0.5
    E[j - 1, i - 1] += 0.5
    return E


def _canonical(i: int, j: int) -> tuple:
    if (i, j) not in ((1, 1), (1, 2), (2, 1), (2, 2)):
        raise ValueError(f"index pair ({i}, {j}) outside {{1,2}}^2")
    return (min(i, j), max(i, j))


@dataclass(eq=False)
class CellProblem:
    """Spaces and operators of the cell problem on one mesh."""

    mesh: CellMesh
    params: MaterialParams
    space: P2Space
    pspace: P1FluidSpace
    A: object
    B: object
    C: object

    @classmethod
    def build(cls, mesh: CellMesh, params: MaterialParams) -> "CellProblem":
        V = P2Space(mesh, periodic=True)
        P = P1FluidSpace(mesh)
        return cls(mesh, params, V, P, assemble_a(V, params), assemble_b(V, P),
                   zero_mean_rows(V))

    def strain_stress(self, i: int, j: int) -> np.ndarray:
        """Per-triangle stress of the affine field with strain E^{ij}."""
        C = material_tensors(self.mesh, self.params)
        return np.einsum("taibj,bj->tai", C, unit_strain(i, j))

    def rhs(self, i: int, j: int):
        f_u = -stress_load(self.space, self.strain_stress(i, j))
        f_p = -(1.0 if i == j else 0.0) * p1_load(self.pspace)
        return f_u, f_p

    def system(self, i: int = 1, j: int = 1) -> SaddleSystem:
        f_u, f_p = self.rhs(i, j)
        return SaddleSystem(self.A, self.B, self.C, f_u, f_p, np.zeros(2))


def solvability_defect(mesh: CellMesh, load: np.ndarray, space: P2Space):
    """Compatibility defect of a displacement load vector against rigid motions.

    Returns ``(defect, scale)``: the sum over the three rigid motions r_k of
    |L(r_k)| evaluated on the non-identified P2 nodes, and the sum of the
    absolute values of the terms entering those sums.
    """
    if space.periodic:
        raise ValueError("use a non-periodic space to test against rotations")
    defect = 0.0
    scale = 0.0
    for r in RIGID_MOTIONS:
        rv = np.asarray(r(space.node_coords)).ravel()
        terms = load * rv
        defect += abs(terms.sum())
        scale += np.abs(terms).sum()
    return float(defect), float(scale)


def check_solvability(cellmesh: CellMesh, params: MaterialParams, i: int, j: int,
                      corrupt=None):
    """Defect of the cell right-hand side against the three rigid motions.

    The displacement load is assembled on the unconstrained P2 space so the
    rotation can be tested.  ``corrupt`` optionally modifies the load vector
    before testing (used to check the detector).

    Returns ``(defect, scale)``; compatibility holds when
    ``defect < 1e-10 * scale``.
    """
    i, j = _canonical(i, j)
    V = P2Space(cellmesh)
    C = material_tensors(cellmesh, params)
    sigma = np.einsum("taibj,bj->tai", C, unit_strain(i, j))
    load = -stress_load(V, sigma)
    if corrupt is not None:
        load = corrupt(load, V)
    return solvability_defect(cellmesh, load, V)


@dataclass(eq=False)
class CellCorrectorSet:
    """Correctors chi^{ij} and pressures r^{ij} for the three index pairs."""

    params: MaterialParams
    mesh: CellMesh
    space: P2Space
    pspace: P1FluidSpace
    chi: dict
    r: dict
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        # (2,1) aliases (1,2)
        self.chi[(2, 1)] = self.chi[(1, 2)]
        self.r[(2, 1)] = self.r[(1, 2)]

    def chi_nodal(self) -> np.ndarray:
        """Nodal values as an array X[k, l, node, a] (0-based k, l)."""
        X = np.empty((2, 2, self.space.n_nodes, 2))
        for k in range(2):
            for l in range(2):
                X[k, l] = self.chi[(k + 1, l + 1)].nodal()
        return X

    @classmethod
    def zero(cls, mesh: CellMesh, params: MaterialParams) -> "CellCorrectorSet":
        V = P2Space(mesh, periodic=True)
        P = P1FluidSpace(mesh)
        chi = {p: FEField(V, np.zeros(V.dof_count)) for p in INDEX_PAIRS}
        r = {p: FEField(P, np.zeros(P.dof_count)) for p in INDEX_PAIRS}
        return cls(params, mesh, V, P, chi, r, {"zero": True})

    # ---- persistence ---------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, j in INDEX_PAIRS:
            textio.write_field(d / f"chi_{i}{j}.field", self.chi[(i, j)])
            textio.write_field(d / f"r_{i}{j}.field", self.r[(i, j)])
        meta = {
            "params": self.params.as_dict(),
            "shape": _shape_dict(self.mesh.shape),
            "h": self.mesh.h_target,
            "n_vertices": self.mesh.n_vertices,
            "n_triangles": self.mesh.n_triangles,
            "diagnostics": self.diagnostics,
        }
        (d / "cell_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory, mesh: CellMesh, params: MaterialParams) -> "CellCorrectorSet":
        d = Path(directory)
        meta = json.loads((d / "cell_meta.json").read_text())
        V = P2Space(mesh, periodic=True)
        P = P1FluidSpace(mesh)
        chi, r = {}, {}
        for i, j in INDEX_PAIRS:
            chi[(i, j)] = textio.read_field(d / f"chi_{i}{j}.field", V)
            r[(i, j)] = textio.read_field(d / f"r_{i}{j}.field", P)
        diag = dict(meta.get("diagnostics", {}))
        diag["loaded_from_cache"] = True
        return cls(params, mesh, V, P, chi, r, diag)


def _shape_dict(shape: InclusionShape) -> dict:
    return {"kind": shape.kind, "center": [float(c) for c in shape.center],
            "size": float(shape.size)}


def cache_key(shape: InclusionShape, h: float, params: MaterialParams) -> str:
    payload = json.dumps({"shape": _shape_dict(shape), "h": repr(float(h)),
                          "params": {k: repr(float(v)) for k, v in params.as_dict().items()}},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def solve_cell_problems(cellmesh: CellMesh, params: MaterialParams,
                        check: bool = True) -> CellCorrectorSet:
    """Solve the three cell problems with one factorization."""
    prob = CellProblem.build(cellmesh, params)
    fac = Factorization(prob.system())
    chi, r = {}, {}
    diag = {"pivot_ratio": fac.pivot_ratio, "dof_u": prob.space.dof_count,
            "dof_p": prob.pspace.dof_count, "pairs": {}}
    for i, j in INDEX_PAIRS:
        defect, scale = check_solvability(cellmesh, params, i, j)
        if check and defect >= SOLVABILITY_TOL * max(scale, 1e-300):
            raise SolvabilityViolation(
                f"cell right-hand side ({i},{j}) incompatible: defect {defect:.3e}, scale {scale:.3e}")
        f_u, f_p = prob.rhs(i, j)
        sol = fac.solve(f_u, f_p, np.zeros(2))
        chi[(i, j)] = FEField(prob.space, sol.u)
        r[(i, j)] = FEField(prob.pspace, sol.p)
        diag["pairs"][f"{i}{j}"] = {
            "residual": sol.residual,
            "relative_residual": sol.relative_residual,
            "stability_ratio": sol.stability_ratio,
            "solvability_defect": defect,
            "solvability_scale": scale,
            "multipliers": [float(m) for m in sol.multipliers],
        }
    return CellCorrectorSet(params, cellmesh, prob.space, prob.pspace, chi, r, diag)


def solve_cell_problem(cellmesh: CellMesh, params: MaterialParams, i: int, j: int):
    """Solve one cell problem; returns ``(chi, r)`` FEFields."""
    i, j = _canonical(i, j)
    defect, scale = check_solvability(cellmesh, params, i, j)
    if defect >= SOLVABILITY_TOL * max(scale, 1e-300):
        raise SolvabilityViolation(f"defect {defect:.3e} at scale {scale:.3e}")
    prob = CellProblem.build(cellmesh, params)
    sol = Factorization(prob.system(i, j)).solve(*prob.rhs(i, j), np.zeros(2))
    return FEField(prob.space, sol.u), FEField(prob.pspace, sol.p)


def load_or_solve(cache_dir, shape: InclusionShape, h: float, params: MaterialParams,
                  mesh: CellMesh | None = None) -> CellCorrectorSet:
    """Corrector set from the cache directory, solving and storing on a miss."""
    if mesh is None:
        mesh = build_unit_cell_mesh(shape, h)
    if cache_dir is None:
        return solve_cell_problems(mesh, params)
    d = Path(cache_dir) / cache_key(shape, h, params)
    if (d / "cell_meta.json").exists():
        return CellCorrectorSet.load(d, mesh, params)
    cs = solve_cell_problems(mesh, params)
    cs.save(d)
    return cs


def grad_sup_norm(chi: FEField) -> float:
    """Maximum Frobenius norm of grad(chi) over all quadrature points."""
    g = grad_at_quadpoints(chi)
    return float(np.sqrt(np.max(np.sum(g.reshape(*g.shape[:2], -1) ** 2, axis=-1))))


def mean_value(chi: FEField) -> np.ndarray:
    """Integral of each component over the mesh."""
    v = values_at_quadpoints(chi)
    return np.einsum("tq,tqa->a", chi.space.geo.qweights, v)


def fluid_divergence(chi: FEField) -> float:
    """Integral of div(chi) over the fluid subdomain."""
    g = grad_at_quadpoints(chi)
    w = chi.space.geo.qweights * (chi.space.mesh.tags == FLUID)[:, None]
    return float(np.sum(w * (g[..., 0, 0] + g[..., 1, 1])))

