"""Unit-cell and periodic-composite triangulations.

Meshes are built from a uniform background grid whose vertices near a
curved interface are dropped and replaced by points placed on the curve.
A Delaunay triangulation of the resulting cloud is made boundary-conforming
by splitting any curve chord it misses, then triangles are tagged by
which side of the polygonal curve their centroid falls on.

The composite mesh of Omega tiles an affinely scaled copy of the unit-cell
mesh into every lattice cell and fills the leftover collar next to the
outer boundary with the same grid-plus-curve construction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import InvalidShape, MeshFailure, ResolutionError

ELASTIC = 0
FLUID = 1

CELL_MARGIN = 0.05


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------

def _circle_count(radius: float, h: float, minimum: int = 8) -> int:
    # multiple of 4 keeps the polygon invariant under x<->y and x->-x
    n = 4 * math.ceil(2.0 * math.pi * radius / (4.0 * h))
    return max(minimum, n)


def _square_polygon(center, half: float, h: float) -> np.ndarray:
    k = max(1, math.ceil(2.0 * half / h))
    t = np.arange(k) / k
    c = np.asarray(center, float)
    sides = [
        np.column_stack([-half + 2 * half * t, np.full(k, -half)]),
        np.column_stack([np.full(k, half), -half + 2 * half * t]),
        np.column_stack([half - 2 * half * t, np.full(k, half)]),
        np.column_stack([np.full(k, -half), half - 2 * half * t]),
    ]
    return np.vstack(sides) + c


def _square_distance(p: np.ndarray, center, half: float) -> np.ndarray:
    """Unsigned distance from points to the boundary of an axis-aligned square."""
    q = np.abs(p - np.asarray(center, float)) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return np.abs(outside + inside)


@dataclass(frozen=True)
class InclusionShape:
    """Inclusion omega inside the unit cell Y = (-1/2, 1/2)^2."""

    kind: str = "disk"
    center: tuple = (0.0, 0.0)
    size: float = 0.25

    def validate(self, margin: float = CELL_MARGIN) -> None:
        if self.kind not in ("disk", "square"):
            raise InvalidShape(f"unknown inclusion kind {self.kind!r}")
        if not self.size > 0:
            raise InvalidShape("inclusion size must be positive")
        c = np.asarray(self.center, float)
        gap = 0.5 - np.abs(c) - self.size
        if np.min(gap) < margin:
            raise InvalidShape(
                f"inclusion is {np.min(gap):.3g} from the cell boundary; "
                f"need at least {margin}")

    @property
    def area(self) -> float:
        if self.kind == "disk":
            return math.pi * self.size ** 2
        return 4.0 * self.size ** 2

    @property
    def perimeter(self) -> float:
        if self.kind == "disk":
            return 2.0 * math.pi * self.size
        return 8.0 * self.size

    def polygon(self, h: float) -> np.ndarray:
        if self.kind == "disk":
            n = _circle_count(self.size, h)
            th = 2.0 * np.pi * np.arange(n) / n
            return np.column_stack([np.cos(th), np.sin(th)]) * self.size + self.center
        return _square_polygon(self.center, self.size, h)

    def project(self, p: np.ndarray) -> np.ndarray:
        if self.kind == "disk":
            c = np.asarray(self.center, float)
            d = p - c
            return c + self.size * d / np.linalg.norm(d, axis=-1, keepdims=True)
        return p

    def distance(self, p: np.ndarray) -> np.ndarray:
        if self.kind == "disk":
            return np.abs(np.linalg.norm(p - self.center, axis=1) - self.size)
        return _square_distance(p, self.center, self.size)


@dataclass(frozen=True)
class DomainShape:
    """Macroscopic domain Omega, centred at the origin."""

    kind: str = "disk"
    size: float = 0.5

    def __post_init__(self):
        if self.kind not in ("disk", "square"):
            raise InvalidShape(f"unknown domain kind {self.kind!r}")
        if not self.size > 0:
            raise InvalidShape("domain size must be positive")

    @property
    def conforming(self) -> bool:
        # the square has corners, so it is outside the smooth-boundary setting
        return self.kind == "disk"

    @property
    def area(self) -> float:
        if self.kind == "disk":
            return math.pi * self.size ** 2
        return 4.0 * self.size ** 2

    @property
    def perimeter(self) -> float:
        if self.kind == "disk":
            return 2.0 * math.pi * self.size
        return 8.0 * self.size

    def contains(self, p: np.ndarray) -> np.ndarray:
        """Strict membership in the open domain."""
        p = np.atleast_2d(p)
        if self.kind == "disk":
            return np.einsum("ij,ij->i", p, p) < self.size ** 2
        return np.max(np.abs(p), axis=1) < self.size

    def distance(self, p: np.ndarray) -> np.ndarray:
        """dist(x, boundary) for points inside Omega (clipped at zero outside)."""
        p = np.atleast_2d(p)
        if self.kind == "disk":
            d = self.size - np.linalg.norm(p, axis=1)
        else:
            d = self.size - np.max(np.abs(p), axis=1)
        return np.maximum(d, 0.0)

    def distance_gradient(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        if self.kind == "disk":
            r = np.linalg.norm(p, axis=1, keepdims=True)
            return -p / np.where(r > 0, r, 1.0)
        g = np.zeros_like(p)
        ax = np.argmax(np.abs(p), axis=1)
        rows = np.arange(len(p))
        g[rows, ax] = -np.sign(p[rows, ax])
        return g

    def polygon(self, h: float) -> np.ndarray:
        if self.kind == "disk":
            n = _circle_count(self.size, h, minimum=16)
            th = 2.0 * np.pi * np.arange(n) / n
            return np.column_stack([np.cos(th), np.sin(th)]) * self.size
        return _square_polygon((0.0, 0.0), self.size, h)

    def project(self, p: np.ndarray) -> np.ndarray:
        if self.kind == "disk":
            return self.size * p / np.linalg.norm(p, axis=-1, keepdims=True)
        return p


# --------------------------------------------------------------------------
# meshes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TriMesh:
    """Tagged triangulation; triangles are counter-clockwise."""

    vertices: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    interface_edges: np.ndarray
    boundary_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    @property
    def h(self) -> float:
        """Maximum element diameter (longest edge)."""
        v = self.vertices[self.triangles]
        e = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2)
        return float(e.max())

    def area_of(self, tag: int) -> float:
        return float(self.areas()[self.tags == tag].sum())

    def same_as(self, other: "TriMesh") -> bool:
        return (self.vertices.shape == other.vertices.shape
                and self.triangles.shape == other.triangles.shape
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.vertices, other.vertices))


@dataclass(frozen=True, eq=False)
class CellMesh(TriMesh):
    """Triangulation of Y with inclusion omega and periodic vertex pairing.

    ``periodic_partner[v]`` is the partner of boundary vertex ``v`` on the
    opposite face (``-1`` for interior vertices).  Vertices on the vertical
    faces, corners included, pair horizontally; the remaining top/bottom
    vertices pair vertically.
    """

    periodic_partner: np.ndarray = field(default=None)
    shape: InclusionShape = field(default=None)
    h_target: float = 0.0

    def periodic_pairs(self) -> dict:
        idx = np.flatnonzero(self.periodic_partner >= 0)
        return {int(i): int(self.periodic_partner[i]) for i in idx}


@dataclass(frozen=True, eq=False)
class DomainMesh(TriMesh):
    """Triangulation of Omega with the eps-periodic inclusion set D_eps.

    ``cell_index[t]`` is the position in ``lattice`` of the cell containing
    triangle ``t`` (``-1`` in the collar next to the boundary) and
    ``cell_triangle[t]`` the matching triangle of ``cell_mesh``.
    """

    eps: float = 1.0
    lattice: np.ndarray = field(default=None)
    domain: DomainShape = field(default=None)
    vertex_boundary_distance: np.ndarray = field(default=None)
    cell_mesh: CellMesh | None = None
    cell_index: np.ndarray = field(default=None)
    cell_triangle: np.ndarray = field(default=None)
    h_target: float = 0.0

    @property
    def conforming(self) -> bool:
        return self.domain.conforming


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_keys(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * n + hi


def mesh_edges(triangles: np.ndarray, n_vertices: int):
    """Unique edges and the triangle-to-edge map (local edges 01, 12, 20).

    Returns ``edges (ne, 2)``, ``tri_edges (nt, 3)`` and ``counts (ne,)``
    (number of triangles sharing each edge).
    """
    a = triangles[:, [0, 1, 2]].ravel()
    b = triangles[:, [1, 2, 0]].ravel()
    keys = _edge_keys(a, b, n_vertices)
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    edges = np.column_stack([uniq // n_vertices, uniq % n_vertices])
    return edges, inv.reshape(-1, 3), counts


def _oriented_boundary_edges(triangles, n_vertices):
    a = triangles[:, [0, 1, 2]].ravel()
    b = triangles[:, [1, 2, 0]].ravel()
    keys = _edge_keys(a, b, n_vertices)
    _, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    once = counts[inv] == 1
    return np.column_stack([a[once], b[once]])


def _interface_edges(triangles, tags, n_vertices):
    """Edges between a fluid and an elastic triangle, in the fluid triangle's
    counter-clockwise order (so the right-hand normal points out of omega)."""
    a = triangles[:, [0, 1, 2]].ravel()
    b = triangles[:, [1, 2, 0]].ravel()
    t = np.repeat(tags, 3)
    keys = _edge_keys(a, b, n_vertices)
    fl = t == FLUID
    el = t == ELASTIC
    shared = np.intersect1d(keys[fl], keys[el])
    sel = fl & np.isin(keys, shared)
    return np.column_stack([a[sel], b[sel]])


def _fix_orientation(pts, tris):
    ar = triangle_areas(pts, tris)
    tris = tris.copy()
    neg = ar < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _star_polygon_contains(pts, poly, center) -> np.ndarray:
    """Point-in-polygon for a polygon star-shaped about ``center``.

    The polygon vertices must be ordered by increasing angle about the
    centre (counter-clockwise, any starting point).
    """
    c = np.asarray(center, float)
    va = np.mod(np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0]), 2 * np.pi)
    order = np.argsort(va, kind="stable")
    poly = poly[order]
    va = va[order]
    pa = np.mod(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]), 2 * np.pi)
    k = np.searchsorted(va, pa, side="right") - 1
    k = np.mod(k, len(poly))
    p0 = poly[k]
    p1 = poly[np.mod(k + 1, len(poly))]
    cross = (p1[:, 0] - p0[:, 0]) * (pts[:, 1] - p0[:, 1]) - \
        (p1[:, 1] - p0[:, 1]) * (pts[:, 0] - p0[:, 0])
    return cross > 0


def _conforming_delaunay(points, removable, loops, locked_edges=None,
                         max_iter: int = 40):
    """Delaunay triangulation containing every loop chord and locked edge.

    Parameters
    ----------
    points : (k, 2) array
        Fixed points.  ``removable`` flags the ones that may be dropped when
        they obstruct a locked edge.
    loops : list of (pts, project)
        Closed curves; a missing chord is split at its midpoint mapped back
        onto the curve by ``project``.
    locked_edges : (m, 2) int array, optional
        Index pairs into ``points`` that must appear unchanged.

    Returns
    -------
    pts, triangles, kept, loop_indices
        ``kept`` lists which of the input fixed points survive (their new
        indices are ``0..len(kept)-1``); ``loop_indices[i]`` are the vertex
        indices of loop ``i`` in order.
    """
    active = np.ones(len(points), bool)
    loop_pts = [np.asarray(lp, float) for lp, _ in loops]
    projectors = [pr for _, pr in loops]
    locked = np.zeros((0, 2), int) if locked_edges is None else np.asarray(locked_edges)
    for _ in range(max_iter):
        kept = np.flatnonzero(active)
        new_of_old = -np.ones(len(points), int)
        new_of_old[kept] = np.arange(len(kept))
        all_pts = np.vstack([points[kept]] + loop_pts)
        n = len(all_pts)
        tri = Delaunay(all_pts)
        if len(tri.coplanar):
            raise MeshFailure("duplicate points in triangulation input")
        simp = tri.simplices
        ek = np.unique(_edge_keys(simp[:, [0, 1, 2]].ravel(),
                                  simp[:, [1, 2, 0]].ravel(), n))
        changed = False
        offset = len(kept)
        loop_indices = []
        for li, lp in enumerate(loop_pts):
            m = len(lp)
            gi = offset + np.arange(m)
            offset += m
            loop_indices.append(gi)
            gj = np.roll(gi, -1)
            missing = ~np.isin(_edge_keys(gi, gj, n), ek)
            if missing.any():
                changed = True
                mids = 0.5 * (lp + np.roll(lp, -1, axis=0))[missing]
                mids = projectors[li](mids)
                slots = np.flatnonzero(missing) + 1
                loop_pts[li] = np.insert(lp, slots, mids, axis=0)
        if len(locked):
            la = new_of_old[locked[:, 0]]
            lb = new_of_old[locked[:, 1]]
            if np.any(la < 0) or np.any(lb < 0):
                raise MeshFailure("locked edge endpoint was removed")
            missing = ~np.isin(_edge_keys(la, lb, n), ek)
            if missing.any():
                changed = True
                tree = cKDTree(points)
                for a, b in locked[missing]:
                    mid = 0.5 * (points[a] + points[b])
                    rad = 0.5 * np.linalg.norm(points[b] - points[a])
                    near = np.array(tree.query_ball_point(mid, rad * (1 + 1e-9)), int)
                    near = near[(near != a) & (near != b)]
                    near = near[active[near] & removable[near]]
                    if len(near) == 0:
                        raise MeshFailure(
                            "locked edge obstructed by a boundary point; "
                            "refine h or move the domain boundary")
                    active[near] = False
        if not changed:
            tris = _fix_orientation(all_pts, simp)
            return all_pts, tris, kept, loop_indices
    raise MeshFailure("boundary recovery did not converge")


def _grid(lo: float, hi: float, spacing: float, origin: float) -> np.ndarray:
    k0 = math.ceil((lo - origin) / spacing - 1e-9)
    k1 = math.floor((hi - origin) / spacing + 1e-9)
    return origin + spacing * np.arange(k0, k1 + 1)


def _band(chord: float) -> float:
    # grid points closer than this to a curve would sit inside the
    # diametral disk of some chord
    return 0.6 * chord


def _max_chord(poly):
    return float(np.max(np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)))


def build_unit_cell_mesh(shape: InclusionShape, h: float) -> CellMesh:
    """Boundary-fitted triangulation of the unit cell with one inclusion.

    The background grid has spacing ``1/ceil(1/h)`` so the faces of Y carry
    identical vertex sets and pair up exactly under translation.
    """
    if not h > 0:
        raise MeshFailure("h must be positive")
    shape.validate()
    m = math.ceil(1.0 / h - 1e-12)
    s = 1.0 / m
    g = -0.5 + s * np.arange(m + 1)
    X, Yg = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Yg.ravel()])
    on_face = np.any(np.isclose(np.abs(pts), 0.5, atol=1e-12), axis=1)
    pts[np.isclose(pts, 0.5, atol=1e-12)] = 0.5
    pts[np.isclose(pts, -0.5, atol=1e-12)] = -0.5

    poly = shape.polygon(min(h, s))
    keep = on_face | (shape.distance(pts) >= _band(_max_chord(poly)))
    pts = pts[keep]
    all_pts, tris, kept, loops = _conforming_delaunay(
        pts, np.zeros(len(pts), bool), [(poly, shape.project)])
    iface_poly = all_pts[loops[0]]

    ar = triangle_areas(all_pts, tris)
    if np.any(ar <= 1e-14 * s * s):
        raise MeshFailure("degenerate triangle in cell mesh")
    cent = all_pts[tris].mean(axis=1)
    tags = np.where(_star_polygon_contains(cent, iface_poly, shape.center),
                    FLUID, ELASTIC).astype(np.int8)

    partner = _periodic_partner(all_pts)
    mesh = CellMesh(
        vertices=all_pts, triangles=tris, tags=tags,
        interface_edges=_interface_edges(tris, tags, len(all_pts)),
        boundary_edges=_oriented_boundary_edges(tris, len(all_pts)),
        periodic_partner=partner, shape=shape, h_target=h)
    check_cell_mesh(mesh)
    return mesh


def _periodic_partner(pts: np.ndarray) -> np.ndarray:
    tol = 1e-10
    partner = -np.ones(len(pts), int)
    tree = cKDTree(pts)
    left = np.abs(pts[:, 0] + 0.5) < tol
    right = np.abs(pts[:, 0] - 0.5) < tol
    bottom = (np.abs(pts[:, 1] + 0.5) < tol) & ~(left | right)
    top = (np.abs(pts[:, 1] - 0.5) < tol) & ~(left | right)
    for src, shift in ((left, (1.0, 0.0)), (bottom, (0.0, 1.0))):
        idx = np.flatnonzero(src)
        d, j = tree.query(pts[idx] + shift)
        if np.any(d > tol):
            raise MeshFailure("cell faces do not match under periodic translation")
        partner[idx] = j
        partner[j] = idx
    if np.any(partner[right | top] < 0):
        raise MeshFailure("unpaired periodic boundary vertex")
    return partner


def check_cell_mesh(mesh: CellMesh) -> None:
    """Raise MeshFailure unless every CellMesh invariant holds."""
    ar = mesh.areas()
    if np.any(ar <= 0):
        raise MeshFailure("non-positive triangle area")
    if abs(ar.sum() - 1.0) > 1e-12:
        raise MeshFailure(f"cell area {ar.sum()!r} differs from 1")
    _, _, counts = mesh_edges(mesh.triangles, mesh.n_vertices)
    if np.any(counts > 2):
        raise MeshFailure("non-manifold edge")
    p = mesh.periodic_partner
    bnd = np.unique(mesh.boundary_edges)
    if np.any(p[bnd] < 0) or np.any(p[p[bnd]] != bnd):
        raise MeshFailure("periodic pairing is not an involution on the boundary")
    if mesh.n_triangles and np.any(mesh.tags == FLUID):
        ie = mesh.interface_edges
        deg = np.bincount(ie.ravel(), minlength=mesh.n_vertices)
        if np.any(deg[np.unique(ie)] != 2):
            raise MeshFailure("interface edges do not form a simple loop")
        if _count_loops(ie) != 1:
            raise MeshFailure("interface is not a single closed loop")


def _count_loops(edges: np.ndarray) -> int:
    nxt = {int(a): int(b) for a, b in edges}
    seen = set()
    loops = 0
    for start in nxt:
        if start in seen:
            continue
        loops += 1
        v = start
        while v not in seen:
            seen.add(v)
            v = nxt.get(v, start)
    return loops


def enumerate_lattice(domain: DomainShape, eps: float) -> np.ndarray:
    """Lattice points n whose closed cell eps*(n + closure(Y)) lies inside Omega.

    Containment is tested on the four corners and the four edge midpoints
    of each candidate cell; both supported domains are convex, so this is
    exact.  Returns an ``(k, 2)`` integer array in lexicographic order.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    kmax = math.ceil(domain.size / eps) + 1
    r = np.arange(-kmax, kmax + 1)
    cand = np.array(list(itertools.product(r, r)), dtype=int)
    probes = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5],
                       [0.0, -0.5], [0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]])
    ok = np.ones(len(cand), bool)
    for q in probes:
        ok &= domain.contains(eps * (cand + q))
    return cand[ok]


def _in_closed_lattice_cells(p: np.ndarray, eps: float, lattice_set) -> np.ndarray:
    f = p / eps + 0.5
    lo = np.floor(f - 1e-9).astype(int)
    hi = np.floor(f + 1e-9).astype(int)
    out = np.zeros(len(p), bool)
    for cx in (lo[:, 0], hi[:, 0]):
        for cy in (lo[:, 1], hi[:, 1]):
            out |= np.fromiter(((a, b) in lattice_set for a, b in zip(cx, cy)),
                               bool, count=len(p))
    return out


def _merge_vertices(pts: np.ndarray, tol: float):
    """Collapse coincident vertices; returns (unique_pts, old->new map)."""
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(pts))
    if len(pairs):
        # pairs come from coincident points, so linking each to its min works
        # after iterating to a fixed point
        for _ in range(8):
            a, b = parent[pairs[:, 0]], parent[pairs[:, 1]]
            lo = np.minimum(a, b)
            np.minimum.at(parent, pairs[:, 0], lo)
            np.minimum.at(parent, pairs[:, 1], lo)
            parent = parent[parent]
            if np.all(parent[pairs[:, 0]] == parent[pairs[:, 1]]):
                break
    roots, new = np.unique(parent, return_inverse=True)
    return pts[roots], new


def build_domain_mesh(domain: DomainShape, eps: float, shape: InclusionShape | None,
                      h: float) -> DomainMesh:
    """Triangulate Omega with one scaled inclusion in every lattice cell.

    Inside each lattice cell the mesh is the unit-cell mesh built at
    spacing ``h/eps``, mapped by ``y -> eps*(n + y)``.  With ``shape=None``
    the result is an inclusion-free mesh on the same eps-aligned grid.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if shape is None:
        return build_plain_mesh(domain, h, eps)
    if h > eps / 4 + 1e-15:
        raise ResolutionError(f"h={h} does not resolve inclusions at eps={eps}; need h <= eps/4")
    shape.validate()
    cell = build_unit_cell_mesh(shape, h / eps)
    m = math.ceil(eps / h - 1e-12)
    s = eps / m
    lattice = enumerate_lattice(domain, eps)
    lattice_set = {tuple(n) for n in lattice}

    # tiled part
    nc = len(lattice)
    if nc:
        tv = (eps * (cell.vertices[None, :, :] + lattice[:, None, :])).reshape(-1, 2)
        tt = (cell.triangles[None, :, :] +
              cell.n_vertices * np.arange(nc)[:, None, None]).reshape(-1, 3)
        tile_pts, remap = _merge_vertices(tv, 1e-9 * s)
        tile_tris = remap[tt]
        tile_tags = np.tile(cell.tags, nc)
        cell_index = np.repeat(np.arange(nc), cell.n_triangles)
        cell_tri = np.tile(np.arange(cell.n_triangles), nc)
        stair = _oriented_boundary_edges(tile_tris, len(tile_pts))
    else:
        tile_pts = np.zeros((0, 2))
        tile_tris = np.zeros((0, 3), int)
        tile_tags = np.zeros(0, np.int8)
        cell_index = np.zeros(0, int)
        cell_tri = np.zeros(0, int)
        stair = np.zeros((0, 2), int)

    # collar between the tiled cells and the outer boundary
    outer = domain.polygon(s)
    band = _band(_max_chord(outer))
    gx = _grid(-domain.size, domain.size, s, -0.5 * eps)
    X, Yg = np.meshgrid(gx, gx, indexing="ij")
    grid = np.column_stack([X.ravel(), Yg.ravel()])
    grid = grid[domain.contains(grid) & (domain.distance(grid) >= band)]
    if nc:
        grid = grid[~_in_closed_lattice_cells(grid, eps, lattice_set)]
    stair_vertices = np.unique(stair)
    fixed = np.vstack([tile_pts[stair_vertices], grid])
    removable = np.r_[np.zeros(len(stair_vertices), bool), np.ones(len(grid), bool)]
    local_of_tile = -np.ones(len(tile_pts), int)
    local_of_tile[stair_vertices] = np.arange(len(stair_vertices))
    locked = local_of_tile[stair]
    all_pts, tris, kept, loops = _conforming_delaunay(
        fixed, removable, [(outer, domain.project)], locked)
    outer_poly = all_pts[loops[0]]
    cent = all_pts[tris].mean(axis=1)
    keep = _star_polygon_contains(cent, outer_poly, (0.0, 0.0))
    if nc:
        keep &= ~_in_closed_lattice_cells(cent, eps, lattice_set)
    tris = tris[keep]

    # stitch: collar vertices that are staircase vertices reuse tile indices
    n_stair = len(stair_vertices)
    kept_is_stair = kept < n_stair
    to_global = np.empty(len(all_pts), int)
    to_global[:len(kept)][kept_is_stair] = stair_vertices[kept[kept_is_stair]]
    fresh = np.r_[np.flatnonzero(~kept_is_stair), np.arange(len(kept), len(all_pts))]
    to_global[fresh] = len(tile_pts) + np.arange(len(fresh))
    vertices = np.vstack([tile_pts, all_pts[fresh]])
    triangles = np.vstack([tile_tris, to_global[tris]])
    tags = np.r_[tile_tags, np.full(len(tris), ELASTIC, np.int8)]
    cell_index = np.r_[cell_index, -np.ones(len(tris), int)]
    cell_tri = np.r_[cell_tri, -np.ones(len(tris), int)]

    on_outer = np.zeros(len(vertices), bool)
    on_outer[to_global[loops[0]]] = True
    dist = domain.distance(vertices)
    dist[on_outer] = 0.0

    mesh = DomainMesh(
        vertices=vertices, triangles=triangles, tags=tags,
        interface_edges=_interface_edges(triangles, tags, len(vertices)),
        boundary_edges=_oriented_boundary_edges(triangles, len(vertices)),
        eps=eps, lattice=lattice, domain=domain,
        vertex_boundary_distance=dist, cell_mesh=cell,
        cell_index=cell_index, cell_triangle=cell_tri, h_target=h)
    check_domain_mesh(mesh, outer_poly)
    return mesh


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def check_domain_mesh(mesh: DomainMesh, outer_poly=None) -> None:
    ar = mesh.areas()
    if np.any(ar <= 0):
        raise MeshFailure("non-positive triangle area")
    _, _, counts = mesh_edges(mesh.triangles, mesh.n_vertices)
    if np.any(counts > 2):
        raise MeshFailure("non-manifold edge")
    if outer_poly is not None:
        if abs(ar.sum() - polygon_area(outer_poly)) > 1e-10 * mesh.domain.area:
            raise MeshFailure("triangles do not tile the boundary polygon")
        if len(mesh.boundary_edges) != len(outer_poly):
            raise MeshFailure("mesh boundary is not the outer polygon (hanging nodes?)")
    if np.any(mesh.vertex_boundary_distance[np.unique(mesh.boundary_edges)] != 0):
        raise MeshFailure("boundary vertex with nonzero distance")


def build_plain_mesh(domain: DomainShape, h: float, eps: float | None = None) -> DomainMesh:
    """Mesh of Omega without inclusions (used for the homogenized problem).

    The grid is aligned with ``eps`` when given so that it nests with the
    collar grid of the composite mesh; otherwise with the origin.
    """
    if eps is None:
        eps = 0.999999
    m = math.ceil(eps / h - 1e-12)
    s = eps / m
    outer = domain.polygon(s)
    band = _band(_max_chord(outer))
    gx = _grid(-domain.size, domain.size, s, -0.5 * eps)
    X, Yg = np.meshgrid(gx, gx, indexing="ij")
    grid = np.column_stack([X.ravel(), Yg.ravel()])
    grid = grid[domain.contains(grid) & (domain.distance(grid) >= band)]
    all_pts, tris, kept, loops = _conforming_delaunay(
        grid, np.ones(len(grid), bool), [(outer, domain.project)])
    outer_poly = all_pts[loops[0]]
    cent = all_pts[tris].mean(axis=1)
    tris = tris[_star_polygon_contains(cent, outer_poly, (0.0, 0.0))]
    used = np.unique(tris)
    new = -np.ones(len(all_pts), int)
    new[used] = np.arange(len(used))
    vertices = all_pts[used]
    tris = new[tris]
    on_outer = np.zeros(len(vertices), bool)
    on_outer[new[loops[0]]] = True
    dist = domain.distance(vertices)
    dist[on_outer] = 0.0
    tags = np.zeros(len(tris), np.int8)
    mesh = DomainMesh(
        vertices=vertices, triangles=tris, tags=tags,
        interface_edges=np.zeros((0, 2), int),
        boundary_edges=_oriented_boundary_edges(tris, len(vertices)),
        eps=eps, lattice=np.zeros((0, 2), int), domain=domain,
        vertex_boundary_distance=dist, cell_mesh=None,
        cell_index=-np.ones(len(tris), int), cell_triangle=-np.ones(len(tris), int),
        h_target=h)
    check_domain_mesh(mesh, outer_poly)
    return mesh


def boundary_distance(mesh: DomainMesh) -> np.ndarray:
    """Exact distance from every vertex to the analytic boundary of Omega."""
    return mesh.vertex_boundary_distance.copy()


class PointLocator:
    """Containing-triangle lookup through a k-d tree of centroids.

    Points outside the mesh (for instance between a curved boundary and
    its polygon) fall back to the candidate triangle they are closest to
    being inside, which extrapolates the local polynomial.
    """

    def __init__(self, mesh: TriMesh, k: int = 12):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        self.centroids = p.mean(axis=1)
        self.tree = cKDTree(self.centroids)
        self.k = min(k, mesh.n_triangles)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        self._p0 = p[:, 0]
        self._e1 = e1
        self._e2 = e2
        self._det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    def _bary(self, tri, pts):
        r = pts - self._p0[tri]
        e1, e2, det = self._e1[tri], self._e2[tri], self._det[tri]
        l1 = (r[..., 0] * e2[..., 1] - r[..., 1] * e2[..., 0]) / det
        l2 = (e1[..., 0] * r[..., 1] - e1[..., 1] * r[..., 0]) / det
        return np.stack([1 - l1 - l2, l1, l2], axis=-1)

    def locate(self, pts: np.ndarray, chunk: int = 200000):
        """Return ``(triangle, barycentric, inside)`` for each point."""
        pts = np.asarray(pts, float).reshape(-1, 2)
        n = len(pts)
        tri = np.empty(n, int)
        bary = np.empty((n, 3))
        inside = np.empty(n, bool)
        for s in range(0, n, chunk):
            q = pts[s:s + chunk]
            _, cand = self.tree.query(q, k=self.k)
            cand = cand.reshape(len(q), -1)
            b = self._bary(cand, q[:, None, :])
            score = b.min(axis=2)
            best = np.argmax(score, axis=1)
            rows = np.arange(len(q))
            tri[s:s + chunk] = cand[rows, best]
            bary[s:s + chunk] = b[rows, best]
            inside[s:s + chunk] = score[rows, best] >= -1e-10
        return tri, bary, inside
