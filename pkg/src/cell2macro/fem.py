"""Finite-element spaces, quadrature and assembly.

Displacements live in continuous piecewise-quadratic vector fields and
pressures in continuous piecewise-linear scalars supported on the fluid
triangles.  Vector degrees of freedom are interleaved: scalar node ``s``
carries components ``2*s`` and ``2*s + 1``.

Constitutive tensors use the convention

    a(u, phi) = integral of C[a, i, b, j] * d_j u_b * d_i phi_a

so the Lame tensor is ``lam d_ai d_bj + mu (d_ab d_ij + d_aj d_ib)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParams, RankDeficiency
from .geometry import ELASTIC, FLUID, TriMesh, mesh_edges

# Dunavant 6-point rule, exact for polynomials of degree 4
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
QUAD_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
QUAD_W = np.array([_W1] * 3 + [_W2] * 3)

# 4-point Gauss-Legendre on [0, 1] for edge integrals
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
EDGE_S = 0.5 * (_GL_X + 1.0)
EDGE_W = 0.5 * _GL_W


def quadrature_exactness_degree() -> int:
    return 4


# --------------------------------------------------------------------------
# material data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MaterialParams:
    """Lame pair of the matrix and viscosity of the inclusions."""

    lam: float
    mu: float
    mu_tilde: float

    def __post_init__(self):
        vals = (self.lam, self.mu, self.mu_tilde)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParams("material parameters must be finite")
        if not self.mu > 0:
            raise InvalidParams(f"mu must be positive, got {self.mu}")
        if not 2 * self.lam + 2 * self.mu > 0:
            raise InvalidParams("need 2*lambda + 2*mu > 0")
        if not self.mu_tilde > 0:
            raise InvalidParams(f"mu_tilde must be positive, got {self.mu_tilde}")

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "mu_tilde": self.mu_tilde}

    def ellipticity_bound(self) -> float:
        return min(2 * self.lam + 2 * self.mu, 2 * self.mu, self.mu_tilde) / 2


_I2 = np.eye(2)


def lame_tensor(lam: float, mu: float) -> np.ndarray:
    """C[a, i, b, j] of an isotropic solid."""
    d = _I2
    return (lam * np.einsum("ai,bj->aibj", d, d)
            + mu * (np.einsum("ab,ij->aibj", d, d) + np.einsum("aj,ib->aibj", d, d)))


def viscous_tensor(mu_tilde: float) -> np.ndarray:
    """C[a, i, b, j] of the deviatoric part 2 mu~ D(u):D(phi)."""
    return lame_tensor(0.0, mu_tilde)


def material_tensors(mesh: TriMesh, params: MaterialParams) -> np.ndarray:
    """Per-triangle constitutive tensors, shape (nt, 2, 2, 2, 2)."""
    C = np.empty((mesh.n_triangles, 2, 2, 2, 2))
    C[mesh.tags == ELASTIC] = lame_tensor(params.lam, params.mu)
    C[mesh.tags == FLUID] = viscous_tensor(params.mu_tilde)
    return C


# --------------------------------------------------------------------------
# reference-element data
# --------------------------------------------------------------------------

def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points, shape (..., 6)."""
    L0, L1, L2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                     4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0], axis=-1)


def p2_dbary(bary: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 shape functions w.r.t. (L0, L1, L2), shape (..., 6, 3)."""
    L0, L1, L2 = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros_like(L0)
    rows = [
        [4 * L0 - 1, z, z],
        [z, 4 * L1 - 1, z],
        [z, z, 4 * L2 - 1],
        [4 * L1, 4 * L0, z],
        [z, 4 * L2, 4 * L1],
        [4 * L2, z, 4 * L0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Per-triangle affine data: areas, barycentric gradients, quad points."""

    areas: np.ndarray        # (nt,)
    dL: np.ndarray           # (nt, 3, 2) gradient of each barycentric coord
    qpoints: np.ndarray      # (nt, nq, 2)
    qweights: np.ndarray     # (nt, nq) physical weights

    @classmethod
    def of(cls, mesh: TriMesh) -> "ElementGeometry":
        p = mesh.vertices[mesh.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        # gradients of L1, L2 from the inverse Jacobian; L0 = 1 - L1 - L2
        g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
        dL = np.stack([-g1 - g2, g1, g2], axis=1)
        qp = np.einsum("qk,tkd->tqd", QUAD_BARY, p)
        areas = 0.5 * det
        return cls(areas=areas, dL=dL, qpoints=qp,
                   qweights=areas[:, None] * QUAD_W[None, :])


def p2_grads(geo: ElementGeometry) -> np.ndarray:
    """Physical gradients of the P2 basis at quadrature points, (nt, nq, 6, 2)."""
    dB = p2_dbary(QUAD_BARY)  # (nq, 6, 3)
    return np.einsum("qak,tkd->tqad", dB, geo.dL)


# --------------------------------------------------------------------------
# spaces
# --------------------------------------------------------------------------

class P2Space:
    """Continuous P2 vector space on a triangulation.

    Parameters
    ----------
    mesh : TriMesh
    periodic : bool
        Identify nodes on opposite faces of the unit cell (requires a
        CellMesh).  Node coordinates on the faces ``+1/2`` are mapped to
        ``-1/2`` to find the shared index.
    """

    family = "vectorP2"

    def __init__(self, mesh: TriMesh, periodic: bool = False):
        self.mesh = mesh
        self.periodic = periodic
        nv = mesh.n_vertices
        edges, tri_edges, _ = mesh_edges(mesh.triangles, nv)
        self.edges = edges
        self.tri_edges = tri_edges
        node_xy = np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])
        raw_dofs = np.hstack([mesh.triangles, nv + tri_edges])
        if periodic:
            canon = node_xy.copy()
            canon[np.abs(canon - 0.5) < 1e-10] = -0.5
            keys = np.round(canon * 2 ** 30).astype(np.int64)
            _, first, inv = np.unique(keys, axis=0, return_index=True,
                                      return_inverse=True)
            inv = inv.ravel()
            self.node_coords = canon[first]
            self.scalar_dofs = inv[raw_dofs]
            self.raw_to_node = inv
        else:
            self.node_coords = node_xy
            self.scalar_dofs = raw_dofs
            self.raw_to_node = np.arange(len(node_xy))
        self.n_nodes = len(self.node_coords)
        self.geo = ElementGeometry.of(mesh)
        self._grads = None

    @property
    def dof_count(self) -> int:
        return 2 * self.n_nodes

    @property
    def constraints(self) -> tuple:
        return ("periodic",) if self.periodic else ()

    @property
    def grads(self) -> np.ndarray:
        if self._grads is None:
            self._grads = p2_grads(self.geo)
        return self._grads

    def vector_dofs(self) -> np.ndarray:
        """(nt, 12) global vector dofs ordered (node0 x, node0 y, node1 x, ...)."""
        s = self.scalar_dofs
        return np.stack([2 * s, 2 * s + 1], axis=-1).reshape(len(s), 12)

    def interpolate(self, func) -> "FEField":
        """Nodal interpolant of a vector function ``func(points) -> (n, 2)``."""
        vals = np.asarray(func(self.node_coords), float).reshape(-1, 2)
        return FEField(self, vals.ravel())

    def edge_midpoint_dof(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        nv = self.mesh.n_vertices
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo.astype(np.int64) * nv + hi
        ekeys = self.edges[:, 0].astype(np.int64) * nv + self.edges[:, 1]
        pos = np.searchsorted(ekeys, keys)
        if np.any(ekeys[np.minimum(pos, len(ekeys) - 1)] != keys):
            raise ValueError("edge not in mesh")
        return self.raw_to_node[nv + pos]


class P1Space:
    """Continuous P1 scalar space, optionally restricted to one subdomain tag."""

    def __init__(self, mesh: TriMesh, support: int | None = None):
        self.mesh = mesh
        self.support = support
        if support is None:
            self.triangles = np.arange(mesh.n_triangles)
        else:
            self.triangles = np.flatnonzero(mesh.tags == support)
        tri = mesh.triangles[self.triangles]
        used = np.unique(tri)
        self.vertex_of_dof = used
        dof_of_vertex = -np.ones(mesh.n_vertices, int)
        dof_of_vertex[used] = np.arange(len(used))
        self.dof_of_vertex = dof_of_vertex
        self.dofs = dof_of_vertex[tri] if len(tri) else np.zeros((0, 3), int)
        self.node_coords = mesh.vertices[used]
        full = ElementGeometry.of(mesh)
        self.geo = ElementGeometry(full.areas[self.triangles], full.dL[self.triangles],
                                   full.qpoints[self.triangles], full.qweights[self.triangles])

    family = "scalarP1"

    @property
    def dof_count(self) -> int:
        return len(self.vertex_of_dof)

    def interpolate(self, func) -> "FEField":
        return FEField(self, np.asarray(func(self.node_coords), float).ravel())


class P1FluidSpace(P1Space):
    """Pressure space: continuous P1 on the fluid triangles, full L^2 (no mean fix)."""

    family = "scalarP1_fluid"

    def __init__(self, mesh: TriMesh):
        super().__init__(mesh, support=FLUID)


@dataclass(eq=False)
class FEField:
    """Coefficient vector over a finite-element space."""

    space: object
    coefficients: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, float)
        if self.coefficients.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient length {self.coefficients.shape} does not match "
                f"dof_count {self.space.dof_count}")

    def __add__(self, other):
        _same_space(self, other)
        return FEField(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _same_space(self, other)
        return FEField(self.space, self.coefficients - other.coefficients)

    def __mul__(self, s: float):
        return FEField(self.space, s * self.coefficients)

    __rmul__ = __mul__

    def nodal(self) -> np.ndarray:
        if isinstance(self.space, P2Space):
            return self.coefficients.reshape(-1, 2)
        return self.coefficients


def _same_space(f, g):
    if f.space is not g.space:
        raise ValueError("fields live on different spaces")


def zero_field(space) -> FEField:
    return FEField(space, np.zeros(space.dof_count))


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    A = A.tocsr()
    A.sum_duplicates()
    return A


def assemble_tensor_form(space: P2Space, C: np.ndarray) -> sp.csr_matrix:
    """Matrix of integral C[a,i,b,j] d_j u_b d_i phi_a with per-triangle C.

    ``C`` may be a single (2,2,2,2) tensor or one per triangle.
    """
    G = space.grads                               # (nt, nq, 6, 2)
    w = space.geo.qweights                        # (nt, nq)
    M = np.einsum("tq,tqAi,tqBj->tAiBj", w, G, G, optimize=True)
    if C.ndim == 4:
        K = np.einsum("aibj,tAiBj->tAaBb", C, M)
    else:
        K = np.einsum("taibj,tAiBj->tAaBb", C, M)
    nt = len(K)
    K = K.reshape(nt, 12, 12)
    d = space.vector_dofs()
    rows = np.repeat(d, 12, axis=1)
    cols = np.tile(d, (1, 12))
    return _scatter(rows, cols, K, (space.dof_count, space.dof_count))


def assemble_a(space: P2Space, params: MaterialParams) -> sp.csr_matrix:
    """Lame energy on elastic triangles plus 2 mu~ D:D on fluid triangles."""
    return assemble_tensor_form(space, material_tensors(space.mesh, params))


def assemble_b(space: P2Space, pspace: P1Space) -> sp.csr_matrix:
    """Matrix of b(u, psi) = integral over the fluid of div(u) psi.

    Rows index pressure dofs, columns displacement dofs.
    """
    tri = pspace.triangles
    if len(tri) == 0:
        return sp.csr_matrix((pspace.dof_count, space.dof_count))
    G = space.grads[tri]                          # (nf, nq, 6, 2)
    w = space.geo.qweights[tri]
    psi = QUAD_BARY                               # P1 basis = barycentrics
    Bl = np.einsum("tq,qk,tqAc->tkAc", w, psi, G).reshape(len(tri), 3, 12)
    vd = space.vector_dofs()[tri]
    pd = pspace.dofs
    rows = np.repeat(pd, 12, axis=1)
    cols = np.tile(vd, (1, 3))
    return _scatter(rows, cols, Bl, (pspace.dof_count, space.dof_count))


def assemble_vector_mass(space: P2Space, tags=None) -> sp.csr_matrix:
    """L^2 Gram matrix of the vector space (optionally on a tag subset)."""
    N = p2_values(QUAD_BARY)                      # (nq, 6)
    w = space.geo.qweights
    if tags is not None:
        w = w * np.isin(space.mesh.tags, tags)[:, None]
    Ms = np.einsum("tq,qA,qB->tAB", w, N, N)
    K = np.einsum("tAB,ab->tAaBb", Ms, _I2).reshape(len(Ms), 12, 12)
    d = space.vector_dofs()
    return _scatter(np.repeat(d, 12, axis=1), np.tile(d, (1, 12)), K,
                    (space.dof_count, space.dof_count))


def assemble_vector_laplace(space: P2Space) -> sp.csr_matrix:
    """Gram matrix of the full gradient inner product."""
    C = np.einsum("ab,ij->aibj", _I2, _I2)
    return assemble_tensor_form(space, C)


def assemble_h1_gram(space: P2Space) -> sp.csr_matrix:
    return (assemble_vector_mass(space) + assemble_vector_laplace(space)).tocsr()


def assemble_p1_mass(pspace: P1Space) -> sp.csr_matrix:
    w = pspace.geo.qweights
    Ml = np.einsum("tq,qk,ql->tkl", w, QUAD_BARY, QUAD_BARY)
    d = pspace.dofs
    return _scatter(np.repeat(d, 3, axis=1), np.tile(d, (1, 3)), Ml,
                    (pspace.dof_count, pspace.dof_count))


def p1_load(pspace: P1Space, func=None) -> np.ndarray:
    """Vector of integrals of func * psi_k (func = 1 if omitted)."""
    w = pspace.geo.qweights
    if func is not None:
        w = w * func(pspace.geo.qpoints.reshape(-1, 2)).reshape(w.shape)
    vals = np.einsum("tq,qk->tk", w, QUAD_BARY)
    out = np.zeros(pspace.dof_count)
    np.add.at(out, pspace.dofs, vals)
    return out


def vector_load(space: P2Space, func) -> np.ndarray:
    """Vector of integrals of f . phi for a volume force ``func(points) -> (n, 2)``."""
    geo = space.geo
    fq = np.asarray(func(geo.qpoints.reshape(-1, 2))).reshape(*geo.qweights.shape, 2)
    N = p2_values(QUAD_BARY)
    vals = np.einsum("tq,qA,tqa->tAa", geo.qweights, N, fq).reshape(-1, 12)
    out = np.zeros(space.dof_count)
    np.add.at(out, space.vector_dofs(), vals)
    return out


def stress_load(space: P2Space, sigma: np.ndarray) -> np.ndarray:
    """Vector of integrals of sigma : grad(phi) with per-triangle constant sigma (nt,2,2)."""
    G = space.grads
    vals = np.einsum("tq,tqAi,tai->tAa", space.geo.qweights, G, sigma).reshape(-1, 12)
    out = np.zeros(space.dof_count)
    np.add.at(out, space.vector_dofs(), vals)
    return out


# --------------------------------------------------------------------------
# boundary traces
# --------------------------------------------------------------------------

def boundary_edge_data(space: P2Space, edges: np.ndarray):
    """Quadrature on oriented boundary edges.

    Returns ``points (ne, nq, 2)``, ``weights (ne, nq)``, ``normals (ne, 2)``
    (right-hand normal of the oriented edge) and ``dofs (ne, 3)`` scalar
    node indices of (start, end, midpoint) with basis values ``vals (nq, 3)``.
    """
    a, b = edges[:, 0], edges[:, 1]
    pa = space.mesh.vertices[a]
    pb = space.mesh.vertices[b]
    t = pb - pa
    length = np.linalg.norm(t, axis=1)
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    pts = pa[:, None, :] + EDGE_S[None, :, None] * t[:, None, :]
    w = length[:, None] * EDGE_W[None, :]
    s = EDGE_S
    vals = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
    dofs = np.column_stack([space.raw_to_node[a], space.raw_to_node[b],
                            space.edge_midpoint_dof(a, b)])
    return pts, w, normals, dofs, vals


def boundary_load(space: P2Space, traction) -> np.ndarray:
    """Vector of boundary integrals of g . phi over the mesh boundary.

    ``traction(points, normals) -> (n, 2)``; normals are the outward unit
    normals of the polygonal boundary.
    """
    pts, w, nrm, dofs, vals = boundary_edge_data(space, space.mesh.boundary_edges)
    ne, nq = w.shape
    g = np.asarray(traction(pts.reshape(-1, 2), np.repeat(nrm, nq, axis=0)))
    g = g.reshape(ne, nq, 2)
    loc = np.einsum("eq,qk,eqc->ekc", w, vals, g)
    out = np.zeros(space.dof_count)
    np.add.at(out, 2 * dofs, loc[..., 0])
    np.add.at(out, 2 * dofs + 1, loc[..., 1])
    return out


RIGID_MOTIONS = (
    lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]),
    lambda x: np.column_stack([np.zeros(len(x)), np.ones(len(x))]),
    lambda x: np.column_stack([-x[:, 1], x[:, 0]]),
)


def rigid_motion_basis(space: P2Space) -> list:
    """Interpolants of the translations e1, e2 and the rotation (-y, x)."""
    return [space.interpolate(r) for r in RIGID_MOTIONS]


def rigid_trace_rows(space: P2Space) -> sp.csr_matrix:
    """Rows k of integrals over the boundary of u . r_k ds."""
    rows = [boundary_load(space, lambda x, n, r=r: r(x)) for r in RIGID_MOTIONS]
    return sp.csr_matrix(np.vstack(rows))


def zero_mean_rows(space: P2Space) -> sp.csr_matrix:
    """Two rows with the integral over the mesh of each displacement component."""
    rows = [vector_load(space, lambda x, c=c: np.tile(np.eye(2)[c], (len(x), 1)))
            for c in range(2)]
    return sp.csr_matrix(np.vstack(rows))


def check_constraint_rank(C, tol: float = 1e-10) -> None:
    """Raise RankDeficiency when the rows of ``C`` are (numerically) dependent."""
    if C is None or C.shape[0] == 0:
        return
    D = C.toarray() if sp.issparse(C) else np.asarray(C)
    s = np.linalg.svd(D, compute_uv=False)
    if s[0] == 0 or s[-1] < tol * s[0] or D.shape[0] > D.shape[1]:
        raise RankDeficiency(
            f"constraint rows are dependent (sigma_min/sigma_max = {s[-1] / max(s[0], 1e-300):.3e})")


def constrain(A, C) -> sp.csr_matrix:
    """Augment ``A`` with multiplier rows ``C``: [[A, C^T], [C, 0]]."""
    check_constraint_rank(C)
    k = C.shape[0]
    return sp.bmat([[A, C.T], [C, sp.csr_matrix((k, k))]], format="csr")


def project_out(field: FEField, C, M=None) -> FEField:
    """Orthogonal projection onto the kernel of ``C`` in the ``M`` inner product.

    With ``M`` omitted the Euclidean coefficient inner product is used.
    """
    check_constraint_rank(C)
    Cd = C.toarray() if sp.issparse(C) else np.asarray(C)
    x = field.coefficients
    if M is None:
        Z = Cd.T
    else:
        # direction of steepest change of C x in the M metric: M^{-1} C^T
        from scipy.sparse.linalg import splu
        lu = splu(sp.csc_matrix(M))
        Z = np.column_stack([lu.solve(c) for c in Cd])
    coef = np.linalg.solve(Cd @ Z, Cd @ x)
    return FEField(field.space, x - Z @ coef)


def is_symmetric(A, rtol: float = 1e-13) -> bool:
    D = (A - A.T)
    m = abs(A).max() if A.nnz else 0.0
    return (abs(D).max() if D.nnz else 0.0) <= rtol * m


# --------------------------------------------------------------------------
# evaluation and norms
# --------------------------------------------------------------------------

def values_at_quadpoints(f: FEField) -> np.ndarray:
    """Field values at the quadrature points of each triangle."""
    sp_ = f.space
    if isinstance(sp_, P2Space):
        N = p2_values(QUAD_BARY)
        u = f.coefficients.reshape(-1, 2)[sp_.scalar_dofs]  # (nt, 6, 2)
        return np.einsum("qA,tAa->tqa", N, u)
    c = f.coefficients[sp_.dofs]
    return np.einsum("qk,tk->tq", QUAD_BARY, c)


def grad_at_quadpoints(f: FEField) -> np.ndarray:
    """Gradient samples: (nt, nq, 2, 2) with [.., a, j] = d_j u_a for vectors,
    (nt, nq, 2) for P1 scalars."""
    sp_ = f.space
    if isinstance(sp_, P2Space):
        u = f.coefficients.reshape(-1, 2)[sp_.scalar_dofs]
        return np.einsum("tqAj,tAa->tqaj", sp_.grads, u)
    c = f.coefficients[sp_.dofs]
    g = np.einsum("tkd,tk->td", sp_.geo.dL, c)
    return np.repeat(g[:, None, :], len(QUAD_W), axis=1)


def _weights(f: FEField, subdomain=None) -> np.ndarray:
    sp_ = f.space
    w = sp_.geo.qweights
    if subdomain is not None:
        tags = sp_.mesh.tags if isinstance(sp_, P2Space) else sp_.mesh.tags[sp_.triangles]
        w = w * (tags == subdomain)[:, None]
    return w


def l2_norm(f: FEField, subdomain: int | None = None) -> float:
    v = values_at_quadpoints(f)
    sq = v ** 2 if v.ndim == 2 else np.sum(v ** 2, axis=-1)
    return float(np.sqrt(np.sum(_weights(f, subdomain) * sq)))


def h1_seminorm(f: FEField, subdomain: int | None = None) -> float:
    g = grad_at_quadpoints(f)
    sq = np.sum(g.reshape(*g.shape[:2], -1) ** 2, axis=-1)
    return float(np.sqrt(np.sum(_weights(f, subdomain) * sq)))


def h1_norm(f: FEField, subdomain: int | None = None) -> float:
    return math.hypot(l2_norm(f, subdomain), h1_seminorm(f, subdomain))


def energy(f: FEField, A) -> float:
    c = f.coefficients
    return float(c @ (A @ c))


def locate_barycentric(mesh: TriMesh, tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts`` in triangles ``tri``."""
    p = mesh.vertices[mesh.triangles[tri]]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    r = pts - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
    return np.column_stack([1 - l1 - l2, l1, l2])


def eval_p2(f: FEField, tri: np.ndarray, bary: np.ndarray):
    """Values (n, 2) and gradients (n, 2, 2) of a P2 field at barycentric points."""
    sp_ = f.space
    u = f.coefficients.reshape(-1, 2)[sp_.scalar_dofs[tri]]    # (n, 6, 2)
    N = p2_values(bary)
    dB = p2_dbary(bary)                                          # (n, 6, 3)
    G = np.einsum("nAk,nkd->nAd", dB, sp_.geo.dL[tri])
    return np.einsum("nA,nAa->na", N, u), np.einsum("nAj,nAa->naj", G, u)


def eval_p1(f: FEField, tri_local: np.ndarray, bary: np.ndarray):
    """Values and gradients of a P1 field; ``tri_local`` indexes ``space.triangles``."""
    sp_ = f.space
    c = f.coefficients[sp_.dofs[tri_local]]
    val = np.einsum("nk,nk->n", bary, c)
    grad = np.einsum("nkd,nk->nd", sp_.geo.dL[tri_local], c)
    return val, grad
