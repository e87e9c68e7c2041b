"""First-order corrector, boundary cutoff and mollifier.

The two error measures compared against the composite solution u_eps are

    plain:      u_eps - u0 - eps chi(x/eps) grad u0
    mollified:  u_eps - u0 - eps chi(x/eps) eta_eps S_eps^2(grad u0)

where ``chi(x/eps) G`` stands for ``sum_kl chi^{kl}(x/eps) G_kl``, eta_eps is
a smooth cutoff vanishing within 3 eps of the boundary and S_eps is
convolution with a compactly supported bump of radius eps/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CellCorrectorSet
from .eps_problem import TensorP1Field, project_gradient
from .errors import MeshMismatch
from .fem import QUAD_BARY, FEField, P1FluidSpace, eval_p2, p2_dbary, p2_values
from .geometry import DomainMesh, DomainShape, PointLocator, TriMesh

CUTOFF_SLOPE = 1.875


# --------------------------------------------------------------------------
# cutoff
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffEta:
    """eta = s((dist - 3 eps)/eps) with the quintic smoothstep s, clamped to [0, 1]."""

    eps: float
    domain: DomainShape = field(default_factory=lambda: DomainShape("disk", 0.5))
    inner: float = 3.0
    outer: float = 4.0

    def ramp(self, dist: np.ndarray):
        """Value and derivative with respect to the distance."""
        t = np.clip((np.asarray(dist, float) - self.inner * self.eps)
                    / ((self.outer - self.inner) * self.eps), 0.0, 1.0)
        val = t ** 3 * (10 - 15 * t + 6 * t ** 2)
        dval = 30 * t ** 2 * (1 - t) ** 2 / ((self.outer - self.inner) * self.eps)
        return val, dval


def eval_cutoff(x: np.ndarray, eta: CutoffEta, dist: np.ndarray):
    """Value and gradient of the cutoff at points ``x`` with boundary distance ``dist``.

    The gradient is the ramp derivative times the gradient of the analytic
    distance function of ``eta.domain``.
    """
    x = np.atleast_2d(np.asarray(x, float))
    val, dval = eta.ramp(np.atleast_1d(dist))
    grad = dval[:, None] * eta.domain.distance_gradient(x)
    return val, grad


def check_cutoff_on_mesh(mesh: DomainMesh, eta: CutoffEta) -> dict:
    """Per-vertex plateau and slope checks of the cutoff on a mesh."""
    d = mesh.vertex_boundary_distance
    val, grad = eval_cutoff(mesh.vertices, eta, d)
    slope = np.linalg.norm(grad, axis=1)
    eps = eta.eps
    ok_range = bool(np.all((val >= 0) & (val <= 1)))
    ok_outer = bool(np.all(val[d >= eta.outer * eps] == 1.0))
    ok_inner = bool(np.all(val[d <= eta.inner * eps] == 0.0))
    max_slope = float(slope.max()) if len(slope) else 0.0
    bound = CUTOFF_SLOPE / eps
    return {"range": ok_range, "plateau_outer": ok_outer, "plateau_inner": ok_inner,
            "max_slope": max_slope, "slope_bound": bound,
            "slope": bool(max_slope <= bound * (1 + 1e-12)),
            "pass": ok_range and ok_outer and ok_inner and max_slope <= bound * (1 + 1e-12)}


# --------------------------------------------------------------------------
# mollifier
# --------------------------------------------------------------------------

def bump_profile(r: np.ndarray) -> np.ndarray:
    """Unit-mass profile (16/pi)(1 - 4 r^2)^3 on r < 1/2."""
    r = np.asarray(r, float)
    return np.where(r < 0.5, 16.0 / np.pi * (1 - 4 * r ** 2) ** 3, 0.0)


class MollifierKernel:
    """Discrete convolution stencil of the bump scaled to radius eps/2.

    Offsets lie on Gauss-Legendre rings in the radius with ``n_angles``
    equally spaced angles each (odd rings rotated by half a step).  Each
    ring is invariant under y -> -y, so odd moments vanish exactly, and the
    weights are renormalized to sum to one.
    """

    def __init__(self, eps: float, n_rings: int = 4, n_angles: int = 12):
        if n_angles % 2:
            raise ValueError("n_angles must be even for point symmetry")
        self.eps = eps
        R = eps / 2
        x, w = np.polynomial.legendre.leggauss(n_rings)
        r = 0.5 * R * (x + 1)
        wr = 0.5 * R * w
        offs, wts = [], []
        dth = 2 * np.pi / n_angles
        for k in range(n_rings):
            th = dth * (np.arange(n_angles) + 0.5 * (k % 2))
            offs.append(r[k] * np.column_stack([np.cos(th), np.sin(th)]))
            rho = bump_profile(r[k] / eps) / eps ** 2
            wts.append(np.full(n_angles, rho * r[k] * wr[k] * dth))
        self.offsets = np.vstack(offs)
        raw = np.concatenate(wts)
        self.raw_mass = float(raw.sum())
        self.weights = raw / raw.sum()
        self.radius = R

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def support_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.offsets, axis=1)))


def convolve(evaluate, points: np.ndarray, kernel: MollifierKernel,
             domain: DomainShape | None = None) -> np.ndarray:
    """sum_k w_k f(x - y_k) with f extended by zero outside ``domain``."""
    points = np.asarray(points, float)
    n, m = len(points), len(kernel.weights)
    q = (points[:, None, :] - kernel.offsets[None, :, :]).reshape(-1, 2)
    vals = np.asarray(evaluate(q), float)
    vals = vals.reshape((n * m,) + vals.shape[1:])
    if domain is not None:
        vals = vals * domain.contains(q).reshape((-1,) + (1,) * (vals.ndim - 1))
    vals = vals.reshape((n, m) + vals.shape[1:])
    return np.tensordot(kernel.weights, vals, axes=([0], [1]))


def _p1_evaluator(space, values, locator):
    def ev(pts):
        tri, bary, _ = locator.locate(pts)
        v = values[space.dofs[tri]]
        return np.einsum("nk,nk...->n...", bary, v)
    return ev


def smooth(field, kernel: MollifierKernel, domain: DomainShape | None = None):
    """Convolve a continuous P1 field with the kernel, sampling at its own nodes.

    Accepts a scalar P1 :class:`FEField` or a :class:`TensorP1Field` and
    returns the same kind of object.  Values outside ``domain`` (default:
    the mesh's own domain when it has one) count as zero.
    """
    if domain is None:
        domain = getattr(field.space.mesh, "domain", None)
    loc = PointLocator(field.space.mesh)
    if isinstance(field, TensorP1Field):
        vals = field.values
    else:
        vals = field.coefficients
    out = convolve(_p1_evaluator(field.space, vals, loc), field.space.node_coords,
                   kernel, domain)
    if isinstance(field, TensorP1Field):
        return TensorP1Field(field.space, out)
    return FEField(field.space, out)


# --------------------------------------------------------------------------
# corrector fields on the composite mesh
# --------------------------------------------------------------------------

def _check_meshes(u_eps: FEField, u0: FEField, cs: CellCorrectorSet, mesh: DomainMesh):
    if u_eps.space.mesh is not mesh:
        raise MeshMismatch("u_eps does not live on the given domain mesh")
    if mesh.cell_mesh is None or not cs.mesh.same_as(mesh.cell_mesh):
        raise MeshMismatch("correctors were not computed on the tiling cell mesh")
    d0 = getattr(u0.space.mesh, "domain", None)
    if d0 is None or d0 != mesh.domain:
        raise MeshMismatch("u0 mesh covers a different domain")


def chi_on_domain(cs: CellCorrectorSet, mesh: DomainMesh, space) -> np.ndarray:
    """Nodal values chi^{kl}(x/eps) at the P2 nodes of ``space``: X[k, l, node, a].

    Inside lattice cells the node coincides with a cell-mesh node, so the
    interpolant reproduces chi(x/eps) exactly there.
    """
    y = space.node_coords / mesh.eps
    y = y - np.round(y)
    tri, bary, _ = PointLocator(cs.mesh).locate(y)
    X = np.empty((2, 2, len(y), 2))
    for k in range(2):
        for l in range(2):
            X[k, l] = eval_p2(cs.chi[(k + 1, l + 1)], tri, bary)[0]
    return X


def u0_at(u0: FEField, pts: np.ndarray, locator: PointLocator | None = None):
    """Values and gradients of u0 at arbitrary points by triangle lookup."""
    loc = locator or PointLocator(u0.space.mesh)
    tri, bary, _ = loc.locate(pts)
    return eval_p2(u0, tri, bary)


def gradient_nodal(u0: FEField, space, variant: str, eps: float,
                   kernel: MollifierKernel | None = None,
                   eta: CutoffEta | None = None, mesh: DomainMesh | None = None):
    """The macroscopic gradient factor G at the P2 nodes of ``space``.

    ``plain`` uses the recovered gradient of u0; ``mollified`` uses
    eta_eps S_eps^2 of it.  Returns ``(G (n, 2, 2), info)``.
    """
    grad = project_gradient(u0)
    P = grad.space
    loc = PointLocator(P.mesh)
    nodes = space.node_coords
    info = {"projection_residual": grad.residual}
    if variant == "plain":
        return _p1_evaluator(P, grad.values, loc)(nodes), info
    if variant != "mollified":
        raise ValueError(f"unknown variant {variant!r}")
    domain = mesh.domain
    dist = domain.distance(nodes)
    eta_v, _ = eta.ramp(dist)
    active = eta_v > 0
    once = smooth(grad, kernel, domain)
    G = np.zeros((len(nodes), 2, 2))
    if np.any(active):
        G[active] = convolve(_p1_evaluator(P, once.values, loc), nodes[active],
                             kernel, domain)
        G[active] *= eta_v[active][:, None, None]
        reach = 2 * kernel.support_radius
        info["support_margin"] = float(np.min(dist[active]) - reach)
    else:
        info["support_margin"] = float("inf")
    info["support_inside"] = bool(info["support_margin"] > 0)
    info["active_nodes"] = int(np.count_nonzero(active))
    return G, info


def _p2_at_quad(space, nodal: np.ndarray):
    """Values and x-gradients at quadrature points of a P2 field with arbitrary
    trailing value shape: nodal (n_nodes, ...)."""
    N = p2_values(QUAD_BARY)
    dB = p2_dbary(QUAD_BARY)
    G = np.einsum("qAk,tkd->tqAd", dB, space.geo.dL)
    loc = nodal[space.scalar_dofs]                            # (nt, 6, ...)
    val = np.einsum("qA,tA...->tq...", N, loc)
    grad = np.einsum("tqAd,tA...->tq...d", G, loc)
    return val, grad


@dataclass(eq=False)
class WEps:
    """Error field sampled at the quadrature points of the composite mesh."""

    values: np.ndarray          # (nt, nq, 2)
    grads: np.ndarray           # (nt, nq, 2, 2)
    corrector_values: np.ndarray
    corrector_grads: np.ndarray
    weights: np.ndarray
    info: dict

    def h1_norm(self) -> float:
        l2 = np.sum(self.weights * np.sum(self.values ** 2, axis=-1))
        h1 = np.sum(self.weights * np.sum(self.grads ** 2, axis=(-1, -2)))
        return float(np.sqrt(l2 + h1))


def corrector_term(u0: FEField, cs: CellCorrectorSet, mesh: DomainMesh, space,
                   variant: str, kernel=None, eta=None):
    """eps * chi(x/eps) G and its gradient at quadrature points (chain rule)."""
    eps = mesh.eps
    X = chi_on_domain(cs, mesh, space)
    G, info = gradient_nodal(u0, space, variant, eps, kernel, eta, mesh)
    Xv, Xg = _p2_at_quad(space, np.moveaxis(X, 2, 0))        # (nt,nq,2,2,2), (...,d)
    Gv, Gg = _p2_at_quad(space, G)                           # (nt,nq,2,2), (...,d)
    # corrector component a: eps * sum_kl X[k,l,a] G[k,l]
    c = eps * np.einsum("tqkla,tqkl->tqa", Xv, Gv)
    dc = eps * (np.einsum("tqklad,tqkl->tqad", Xg, Gv)
                + np.einsum("tqkla,tqkld->tqad", Xv, Gg))
    return c, dc, info


def build_w_eps(u_eps: FEField, u0: FEField, correctors: CellCorrectorSet,
                eta: CutoffEta | None, kernel: MollifierKernel | None,
                mesh: DomainMesh, variant: str = "mollified") -> WEps:
    """u_eps - u0 - eps chi(x/eps) G sampled on the composite mesh.

    With ``variant="mollified"`` (the default) G = eta S_eps^2(grad u0);
    ``variant="plain"`` uses the recovered gradient of u0 directly.
    """
    _check_meshes(u_eps, u0, correctors, mesh)
    if variant == "mollified":
        if eta is None or kernel is None:
            raise ValueError("the mollified variant needs a cutoff and a kernel")
        if not (np.isclose(eta.eps, mesh.eps) and np.isclose(kernel.eps, mesh.eps)):
            raise MeshMismatch("eps of cutoff, kernel and mesh disagree")
    space = u_eps.space
    qp = space.geo.qpoints.reshape(-1, 2)
    v0, g0 = u0_at(u0, qp)
    nt, nq = space.geo.qweights.shape
    v0 = v0.reshape(nt, nq, 2)
    g0 = g0.reshape(nt, nq, 2, 2)
    ve, ge = _p2_at_quad(space, u_eps.coefficients.reshape(-1, 2))
    c, dc, info = corrector_term(u0, correctors, mesh, space, variant, kernel, eta)
    return WEps(ve - v0 - c, ge - g0 - dc, c, dc, space.geo.qweights, info)


def error_h1(u_eps: FEField, u0: FEField, correctors: CellCorrectorSet,
             mesh: DomainMesh, variant: str = "plain") -> float:
    """H^1(Omega) norm of the plain or mollified first-order error."""
    eta = CutoffEta(mesh.eps, mesh.domain)
    kernel = MollifierKernel(mesh.eps)
    return build_w_eps(u_eps, u0, correctors, eta, kernel, mesh, variant).h1_norm()


def mollification_gap(w_plain: WEps, w_moll: WEps) -> float:
    """H^1 norm of the difference of the two corrector terms."""
    dv = w_plain.corrector_values - w_moll.corrector_values
    dg = w_plain.corrector_grads - w_moll.corrector_grads
    w = w_plain.weights
    return float(np.sqrt(np.sum(w * np.sum(dv ** 2, axis=-1))
                         + np.sum(w * np.sum(dg ** 2, axis=(-1, -2)))))


def pressure_corrector(u0: FEField, cs: CellCorrectorSet, mesh: DomainMesh) -> FEField:
    """p0 = sum_kl (D u0)_kl r^{kl}(x/eps) at the fluid vertices of the composite mesh."""
    P = P1FluidSpace(mesh)
    pts = P.node_coords
    _, g = u0_at(u0, pts)
    D = 0.5 * (g + np.swapaxes(g, 1, 2))
    y = pts / mesh.eps
    y = y - np.round(y)
    cP = cs.pspace
    fluid = TriMesh(cs.mesh.vertices, cs.mesh.triangles[cP.triangles],
                    cs.mesh.tags[cP.triangles], np.zeros((0, 2), int), np.zeros((0, 2), int))
    tri, bary, _ = PointLocator(fluid).locate(y)
    vals = np.zeros(len(pts))
    for k in range(2):
        for l in range(2):
            r = cs.r[(k + 1, l + 1)].coefficients[cP.dofs[tri]]
            vals += D[:, k, l] * np.einsum("nk,nk->n", bary, r)
    return FEField(P, vals)
