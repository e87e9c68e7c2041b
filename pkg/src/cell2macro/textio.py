"""Plain-text mesh and field formats.

MESH2D v1::

    MESH2D v1
    <nv> <nt> <ne>
    x y dist            (nv lines)
    i j k tag           (nt lines, tag 0 elastic / 1 fluid)
    a b kind            (ne lines, kind interface | outer | periodic:<partner>)

FIELD v1::

    FIELD v1
    <family>
    <dof_count>
    c                   (dof_count lines)

Floats are written with 17 significant digits so values round-trip exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CellMesh, DomainMesh, TriMesh

_FMT = "{:.17g}"


def write_mesh(path, mesh: TriMesh) -> None:
    nv = mesh.n_vertices
    if isinstance(mesh, DomainMesh):
        dist = mesh.vertex_boundary_distance
    else:
        dist = np.zeros(nv)
    lines = []
    for a, b in mesh.interface_edges:
        lines.append(f"{a} {b} interface")
    if isinstance(mesh, CellMesh):
        for a, b in mesh.boundary_edges:
            # record the partner of the edge's start vertex
            lines.append(f"{a} {b} periodic:{mesh.periodic_partner[a]}")
    else:
        for a, b in mesh.boundary_edges:
            lines.append(f"{a} {b} outer")
    out = ["MESH2D v1", f"{nv} {mesh.n_triangles} {len(lines)}"]
    out += [f"{_FMT.format(x)} {_FMT.format(y)} {_FMT.format(d)}"
            for (x, y), d in zip(mesh.vertices, dist)]
    out += [f"{i} {j} {k} {t}" for (i, j, k), t in zip(mesh.triangles, mesh.tags)]
    out += lines
    Path(path).write_text("\n".join(out) + "\n")


@dataclass
class MeshRecord:
    vertices: np.ndarray
    dist: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    edges: np.ndarray
    kinds: list


def read_mesh(path) -> MeshRecord:
    lines = Path(path).read_text().splitlines()
    if lines[0].strip() != "MESH2D v1":
        raise ValueError("not a MESH2D v1 file")
    nv, nt, ne = (int(v) for v in lines[1].split())
    vx = np.array([[float(v) for v in ln.split()] for ln in lines[2:2 + nv]]).reshape(nv, 3)
    tr = np.array([[int(v) for v in ln.split()] for ln in lines[2 + nv:2 + nv + nt]],
                  dtype=int).reshape(nt, 4)
    edges, kinds = [], []
    for ln in lines[2 + nv + nt:2 + nv + nt + ne]:
        a, b, k = ln.split()
        edges.append((int(a), int(b)))
        kinds.append(k)
    return MeshRecord(vx[:, :2], vx[:, 2], tr[:, :3], tr[:, 3],
                      np.array(edges, dtype=int).reshape(-1, 2), kinds)


def write_field(path, field) -> None:
    c = field.coefficients
    out = ["FIELD v1", field.space.family, str(len(c))]
    out += [_FMT.format(v) for v in c]
    Path(path).write_text("\n".join(out) + "\n")


def read_field(path, space):
    """Read a FIELD v1 file onto ``space`` (family and length must match)."""
    from .fem import FEField

    lines = Path(path).read_text().splitlines()
    if lines[0].strip() != "FIELD v1":
        raise ValueError("not a FIELD v1 file")
    family = lines[1].strip()
    n = int(lines[2])
    if family != space.family or n != space.dof_count:
        raise ValueError(f"field ({family}, {n}) does not match space "
                         f"({space.family}, {space.dof_count})")
    return FEField(space, np.array([float(v) for v in lines[3:3 + n]]))
