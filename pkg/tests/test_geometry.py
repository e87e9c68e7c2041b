import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cell2macro.errors import InvalidShape, ResolutionError
from cell2macro.geometry import (ELASTIC, FLUID, DomainShape, InclusionShape, PointLocator,
                                 build_domain_mesh, build_plain_mesh, build_unit_cell_mesh,
                                 enumerate_lattice, mesh_edges)
from cell2macro.textio import read_mesh, write_mesh


def brute_force_lattice_count(R, eps):
    # a cell lies in the disk iff its farthest corner does
    k = int(R / eps) + 2
    n = 0
    for i in range(-k, k + 1):
        for j in range(-k, k + 1):
            if ((abs(i) + 0.5) * eps) ** 2 + ((abs(j) + 0.5) * eps) ** 2 < R ** 2:
                n += 1
    return n


@pytest.mark.parametrize("eps", [1 / 4, 1 / 8, 1 / 16, 0.3, 0.07])
def test_disk_lattice_matches_corner_count(eps):
    lat = enumerate_lattice(DomainShape("disk", 0.5), eps)
    assert len(lat) == brute_force_lattice_count(0.5, eps)


def test_disk_lattice_known_counts():
    counts = [len(enumerate_lattice(DomainShape("disk", 0.5), e)) for e in (1 / 4, 1 / 8, 1 / 16)]
    assert counts == [5, 37, 177]


def test_square_lattice_counts():
    # cells must be strictly inside the open square of half-width 1/2
    sq = DomainShape("square", 0.5)
    assert len(enumerate_lattice(sq, 1 / 4)) == 9
    assert len(enumerate_lattice(sq, 1 / 8)) == 49


def test_cell_mesh_areas_and_tags(disk):
    m = build_unit_cell_mesh(disk, 1 / 16)
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-13)
    assert np.all(m.areas() > 0)
    poly = disk.polygon(1 / 16)
    x, y = poly[:, 0], poly[:, 1]
    poly_area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert m.area_of(FLUID) == pytest.approx(poly_area, rel=1e-12)
    assert m.area_of(ELASTIC) == pytest.approx(1 - poly_area, rel=1e-12)


def test_cell_mesh_periodic_partners_are_translates(disk):
    m = build_unit_cell_mesh(disk, 1 / 8)
    pairs = m.periodic_pairs()
    assert pairs
    for a, b in pairs.items():
        d = m.vertices[b] - m.vertices[a]
        assert np.allclose(np.abs(d), np.round(np.abs(d)), atol=1e-14)
        assert np.max(np.abs(d)) == pytest.approx(1.0)


def test_interface_is_closed_loop(disk):
    m = build_unit_cell_mesh(disk, 1 / 8)
    e = m.interface_edges
    counts = np.bincount(e.ravel(), minlength=m.n_vertices)
    assert np.all(counts[counts > 0] == 2)


def test_conforming_mesh_edges_shared_at_most_twice(disk, omega):
    m = build_domain_mesh(omega, 1 / 4, disk, 1 / 16)
    _, _, counts = mesh_edges(m.triangles, m.n_vertices)
    assert counts.max() <= 2
    assert len(m.lattice) == 5
    assert np.all(m.areas() > 0)


def test_domain_mesh_fluid_area(disk, omega):
    m = build_domain_mesh(omega, 1 / 4, disk, 1 / 16)
    cell = m.cell_mesh
    assert m.area_of(FLUID) == pytest.approx(5 * cell.area_of(FLUID) / 16, rel=1e-12)


def test_domain_mesh_requires_resolution(disk, omega):
    with pytest.raises(ResolutionError):
        build_domain_mesh(omega, 1 / 4, disk, 1 / 8)


def test_inclusion_validation():
    with pytest.raises(InvalidShape):
        InclusionShape("disk", (0.0, 0.0), 0.47).validate()
    with pytest.raises(InvalidShape):
        InclusionShape("ellipse", (0.0, 0.0), 0.2).validate()
    with pytest.raises(InvalidShape):
        DomainShape("disk", -1.0)


def test_no_inclusion_domain_mesh(omega):
    m = build_domain_mesh(omega, 1 / 4, None, 1 / 16)
    assert np.all(m.tags == ELASTIC)
    assert m.areas().sum() == pytest.approx(omega.area, rel=5e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.49, 0.49), st.floats(-0.49, 0.49))
def test_disk_distance_gradient_is_unit(x, y):
    d = DomainShape("disk", 0.5)
    p = np.array([[x, y]])
    if not d.contains(p)[0] or np.hypot(x, y) < 1e-6:
        return
    g = d.distance_gradient(p)[0]
    assert np.linalg.norm(g) == pytest.approx(1.0)
    # moving along the gradient increases the distance at unit rate
    t = 1e-6
    assert (d.distance(p + t * g)[0] - d.distance(p)[0]) / t == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.35, 0.35), st.floats(-0.35, 0.35)), min_size=1,
                max_size=20))
def test_point_locator_barycentrics(points):
    m = build_plain_mesh(DomainShape("disk", 0.5), 1 / 8)
    pts = np.array(points)
    tri, bary, inside = PointLocator(m).locate(pts)
    assert np.all(inside)
    assert np.allclose(bary.sum(axis=1), 1.0)
    assert np.all(bary > -1e-12)
    rec = np.einsum("nk,nkd->nd", bary, m.vertices[m.triangles[tri]])
    assert np.allclose(rec, pts, atol=1e-13)


def test_mesh_text_round_trip(tmp_path, disk):
    m = build_unit_cell_mesh(disk, 1 / 8)
    write_mesh(tmp_path / "cell.mesh", m)
    rec = read_mesh(tmp_path / "cell.mesh")
    assert np.array_equal(rec.vertices, m.vertices)
    assert np.array_equal(rec.triangles, m.triangles)
    assert np.array_equal(rec.tags, m.tags)
    assert math.isclose(float(np.sum(rec.dist)), 0.0)
