"""Traction problems on Omega: the composite (eps-scale) solve and the
homogenized solve.

Both use pure Neumann data g with zero resultant force and torque, and
fix the rigid-motion kernel by multiplier rows enforcing that the trace
of the displacement is orthogonal to the rigid motions on the boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import textio
from .errors import IncompatibleData, MeshMismatch
from .fem import (QUAD_BARY, FEField, MaterialParams, P1FluidSpace, P1Space,
                  P2Space, assemble_a, assemble_b, assemble_tensor_form,
                  boundary_edge_data, boundary_load, energy, grad_at_quadpoints,
                  h1_norm, rigid_trace_rows, RIGID_MOTIONS)
from .geometry import DomainMesh
from .homogenize import HomogenizedTensor
from .saddle import Factorization, SaddleSystem

COMPAT_TOL = 1e-10


# --------------------------------------------------------------------------
# boundary data
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NeumannData:
    """Boundary traction g(x, N) with N the outward unit normal.

    Use the constructors :meth:`equilibrated_linear`, :meth:`torque_free_poly`
    or :meth:`custom`.
    """

    catalog_id: str
    traction: object
    parameters: dict = field(default_factory=dict)

    def __call__(self, x, n):
        return self.traction(x, n)

    def scaled(self, s: float) -> "NeumannData":
        t = self.traction
        return NeumannData(self.catalog_id, lambda x, n: s * t(x, n),
                           {**self.parameters, "scale": s * self.parameters.get("scale", 1.0)})

    @classmethod
    def equilibrated_linear(cls, S) -> "NeumannData":
        """g = S N for a constant symmetric S (the traction of a uniform stress)."""
        S = np.asarray(S, float)
        if S.shape != (2, 2) or not np.allclose(S, S.T, rtol=0, atol=1e-15):
            raise IncompatibleData("S must be a symmetric 2x2 matrix")
        return cls("equilibrated_linear", lambda x, n: n @ S.T,
                   {"S": S.tolist()})

    @classmethod
    def torque_free_poly(cls) -> "NeumannData":
        """Traction of the divergence-free stress [[x^2, -2xy], [-2xy, y^2]]."""
        def g(x, n):
            s11, s22, s12 = x[:, 0] ** 2, x[:, 1] ** 2, -2 * x[:, 0] * x[:, 1]
            return np.column_stack([s11 * n[:, 0] + s12 * n[:, 1],
                                    s12 * n[:, 0] + s22 * n[:, 1]])
        return cls("torque_free_poly", g, {})

    @classmethod
    def zero(cls) -> "NeumannData":
        return cls("zero", lambda x, n: np.zeros_like(x), {})

    @classmethod
    def custom(cls, func, name: str = "custom") -> "NeumannData":
        return cls(name, func, {})

    @classmethod
    def from_config(cls, spec: dict) -> "NeumannData":
        kind = spec.get("kind", "equilibrated_linear")
        if kind == "equilibrated_linear":
            return cls.equilibrated_linear(spec.get("S", [[1.0, 0.0], [0.0, -1.0]]))
        if kind == "torque_free_poly":
            return cls.torque_free_poly()
        if kind == "zero":
            return cls.zero()
        raise ValueError(f"unknown traction kind {kind!r}")

    def describe(self) -> dict:
        return {"kind": self.catalog_id, **self.parameters}


def rigid_moments(space: P2Space, g: NeumannData):
    """Boundary integrals of g . r_k and the matching absolute scale."""
    pts, w, nrm, _, _ = boundary_edge_data(space, space.mesh.boundary_edges)
    ne, nq = w.shape
    x = pts.reshape(-1, 2)
    gv = np.asarray(g(x, np.repeat(nrm, nq, axis=0)))
    ww = w.ravel()
    mom, scale = [], []
    for r in RIGID_MOTIONS:
        d = np.sum(gv * r(x), axis=1)
        mom.append(float(np.sum(ww * d)))
        scale.append(float(np.sum(ww * np.linalg.norm(gv, axis=1) * np.linalg.norm(r(x), axis=1))))
    return np.array(mom), np.array(scale)


def check_compatibility(space: P2Space, g: NeumannData) -> np.ndarray:
    mom, scale = rigid_moments(space, g)
    ref = max(float(scale.max()), 1e-300)
    if np.any(np.abs(mom) > COMPAT_TOL * ref):
        raise IncompatibleData(
            f"traction has nonzero resultant against rigid motions: {mom.tolist()}")
    return mom


# --------------------------------------------------------------------------
# solves
# --------------------------------------------------------------------------

@dataclass(eq=False)
class EpsSolution:
    u_eps: FEField
    p_eps: FEField
    diagnostics: dict

    def save(self, directory, name: str = "u_eps") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        textio.write_field(d / f"{name}.field", self.u_eps)
        if self.p_eps is not None:
            textio.write_field(d / f"{name}_pressure.field", self.p_eps)
        (d / "solution_meta.json").write_text(json.dumps(self.diagnostics, indent=2,
                                                         sort_keys=True))


def _solve_traction(space: P2Space, A, B, pspace, g: NeumannData, extra: dict):
    moments = check_compatibility(space, g)
    C = rigid_trace_rows(space)
    f = boundary_load(space, g)
    system = SaddleSystem(A, B, C, f, None, np.zeros(3))
    sol = Factorization(system).solve(system.rhs_u, system.rhs_p, system.rhs_c)
    u = FEField(space, sol.u)
    trace = C @ sol.u
    diag = {
        "residual": sol.residual,
        "relative_residual": sol.relative_residual,
        "stability_ratio": sol.stability_ratio,
        "pivot_ratio": sol.info.get("pivot_ratio"),
        "traction": g.describe(),
        "rigid_moments": moments.tolist(),
        "trace_orthogonality": [float(t) for t in trace],
        "energy": energy(u, A),
        "work": float(f @ sol.u),
        "dof_u": space.dof_count,
        "dof_p": 0 if pspace is None else pspace.dof_count,
        **extra,
    }
    p = None
    if pspace is not None:
        p = FEField(pspace, sol.p)
        bu = B @ sol.u
        diag["incompressibility"] = float(np.max(np.abs(bu))) if len(bu) else 0.0
    return u, p, diag


def solve_eps(mesh: DomainMesh, params: MaterialParams, g: NeumannData) -> EpsSolution:
    """Composite traction problem: elastic matrix with incompressible inclusions."""
    V = P2Space(mesh)
    P = P1FluidSpace(mesh)
    A = assemble_a(V, params)
    B = assemble_b(V, P)
    u, p, diag = _solve_traction(V, A, B, P, g, {
        "eps": mesh.eps, "params": params.as_dict(),
        "n_cells": int(len(mesh.lattice)), "conforming": mesh.conforming,
        "h": mesh.h_target,
    })
    return EpsSolution(u, p, diag)


def solve_homogenized(mesh: DomainMesh, t: HomogenizedTensor, g: NeumannData,
                      return_diagnostics: bool = False):
    """Galerkin solution of -div(T grad u0) = 0 with traction g."""
    if np.any(mesh.tags != 0):
        raise MeshMismatch("the homogenized problem needs a mesh without inclusions")
    V = P2Space(mesh)
    A = assemble_tensor_form(V, t.stiffness())
    u, _, diag = _solve_traction(V, A, None, None, g, {"tensor": t.provenance,
                                                       "h": mesh.h_target})
    return (u, diag) if return_diagnostics else u


# --------------------------------------------------------------------------
# manufactured constant-stress solution
# --------------------------------------------------------------------------

def strain_for_stress(C: np.ndarray, S) -> np.ndarray:
    """Symmetric M with C : M = S for a stiffness C[a, i, b, j]."""
    S = np.asarray(S, float)
    basis = [np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]),
             np.array([[0.0, 0.5], [0.5, 0.0]])]
    cols = [np.einsum("aibj,bj->ai", C, E) for E in basis]
    K = np.array([[c[0, 0], c[1, 1], c[0, 1]] for c in cols]).T
    m = np.linalg.solve(K, np.array([S[0, 0], S[1, 1], S[0, 1]]))
    return sum(mi * E for mi, E in zip(m, basis))


def lame_strain_for_stress(params: MaterialParams, S) -> np.ndarray:
    """Closed form of lam tr(M) I + 2 mu M = S for symmetric M."""
    S = np.asarray(S, float)
    trM = np.trace(S) / (2 * params.lam + 2 * params.mu)
    return (S - params.lam * trM * np.eye(2)) / (2 * params.mu)


def remove_rigid_trace(space: P2Space, u: FEField) -> FEField:
    """Subtract the rigid motion that makes the boundary trace orthogonal to rigid motions."""
    C = rigid_trace_rows(space)
    R = np.column_stack([r.coefficients for r in
                         (space.interpolate(f) for f in RIGID_MOTIONS)])
    c = np.linalg.solve(C @ R, C @ u.coefficients)
    return FEField(space, u.coefficients - R @ c)


def linear_field(space: P2Space, M) -> FEField:
    M = np.asarray(M, float)
    return space.interpolate(lambda x: x @ M.T)


# --------------------------------------------------------------------------
# gradient recovery and norms of u0
# --------------------------------------------------------------------------

@dataclass(eq=False)
class TensorP1Field:
    """Continuous P1 field with 2x2 values at the vertices of a mesh."""

    space: P1Space
    values: np.ndarray          # (n_nodes, 2, 2)
    residual: float = 0.0

    def at(self, tri: np.ndarray, bary: np.ndarray):
        """Values (n,2,2) and gradients (n,2,2,2) (last index = d/dx_k)."""
        v = self.values[self.space.dofs[tri]]                  # (n, 3, 2, 2)
        val = np.einsum("nk,nkab->nab", bary, v)
        grad = np.einsum("nkd,nkab->nabd", self.space.geo.dL[tri], v)
        return val, grad


def project_gradient(u0: FEField) -> TensorP1Field:
    """L2 projection of grad(u0) onto continuous P1 tensors (values[:, a, j] ~ d_j u_a)."""
    V = u0.space
    P = P1Space(V.mesh)
    w = P.geo.qweights
    M = sp.coo_matrix(
        (np.einsum("tq,qk,ql->tkl", w, QUAD_BARY, QUAD_BARY).ravel(),
         (np.repeat(P.dofs, 3, axis=1).ravel(), np.tile(P.dofs, (1, 3)).ravel())),
        shape=(P.dof_count, P.dof_count)).tocsc()
    g = grad_at_quadpoints(u0)                               # (nt, nq, 2, 2)
    rhs = np.zeros((P.dof_count, 4))
    loc = np.einsum("tq,qk,tqc->tkc", w, QUAD_BARY, g.reshape(*g.shape[:2], 4))
    for c in range(4):
        np.add.at(rhs[:, c], P.dofs, loc[..., c])
    lu = splu(M)
    vals = lu.solve(rhs)
    res = float(np.linalg.norm(M @ vals - rhs))
    return TensorP1Field(P, vals.reshape(-1, 2, 2), res)


def p2_hessians(space: P2Space) -> np.ndarray:
    """Constant second derivatives of the P2 basis per triangle, (nt, 6, 2, 2)."""
    H = np.zeros((6, 3, 3))
    for i in range(3):
        H[i, i, i] = 4.0
    for m, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        H[3 + m, i, j] = H[3 + m, j, i] = 4.0
    dL = space.geo.dL
    return np.einsum("Akl,tkd,tle->tAde", H, dL, dL)


def h2_norm(u: FEField) -> float:
    """Broken H^2 norm (L2, gradient and element-wise Hessian) of a P2 field."""
    V = u.space
    c = u.coefficients.reshape(-1, 2)[V.scalar_dofs]          # (nt, 6, 2)
    Hs = np.einsum("tAde,tAa->tade", p2_hessians(V), c)
    hess = float(np.sum(V.geo.areas * np.sum(Hs ** 2, axis=(1, 2, 3))))
    return float(np.sqrt(h1_norm(u) ** 2 + hess))
