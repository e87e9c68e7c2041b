"""Homogenized coefficients from the cell correctors.

Entries are stored as ``T[i, j, al, be]`` (0-based) for the macroscopic
operator ``-d_i (T[i, j, al, be] d_j u_be)`` acting on component ``al``.
Two independent evaluations are provided: the averaged corrected stress
("formula") and the energy of the corrected affine fields ("energy").
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .cell import CellCorrectorSet, unit_strain
from .fem import (MaterialParams, grad_at_quadpoints, material_tensors,
                  values_at_quadpoints)
from .geometry import ELASTIC, FLUID

_d = np.eye(2)


def lame_entries(lam: float, mu: float) -> np.ndarray:
    """T of a homogeneous isotropic solid: lam d_ia d_jb + mu (d_ib d_ja + d_ij d_ab)."""
    return (lam * np.einsum("ia,jb->ijab", _d, _d)
            + mu * (np.einsum("ib,ja->ijab", _d, _d) + np.einsum("ij,ab->ijab", _d, _d)))


def viscous_entries(mu_tilde: float) -> np.ndarray:
    return mu_tilde * (np.einsum("ij,ab->ijab", _d, _d) + np.einsum("ib,ja->ijab", _d, _d))


@dataclass(frozen=True, eq=False)
class HomogenizedTensor:
    entries: np.ndarray
    provenance: str

    def stiffness(self) -> np.ndarray:
        """The same coefficients in the assembly convention C[a, i, b, j]."""
        return np.transpose(self.entries, (2, 0, 3, 1)).copy()

    def major_defect(self) -> float:
        T = self.entries
        return float(np.max(np.abs(T - T.transpose(1, 0, 3, 2))) / np.max(np.abs(T)))

    def cross_defect(self) -> float:
        T = self.entries
        return float(np.max(np.abs(T - T.transpose(0, 3, 2, 1))) / np.max(np.abs(T)))

    def rank_one(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Q = sum T[i,j,a,b] xi_i xi_j eta_a eta_b for stacked unit vectors."""
        return np.einsum("ijab,ni,nj,na,nb->n", self.entries, xi, xi, eta, eta,
                         optimize=True)

    def as_dict(self) -> dict:
        return {f"{i+1}{j+1}{a+1}{b+1}": float(self.entries[i, j, a, b])
                for i in range(2) for j in range(2) for a in range(2) for b in range(2)}

    @classmethod
    def lame(cls, lam: float, mu: float) -> "HomogenizedTensor":
        return cls(lame_entries(lam, mu), "formula")


def _areas(cs: CellCorrectorSet):
    ar = cs.mesh.areas()
    return float(ar[cs.mesh.tags == ELASTIC].sum()), float(ar[cs.mesh.tags == FLUID].sum())


def tensor_from_formula(cs: CellCorrectorSet) -> HomogenizedTensor:
    """Average of the corrected stress of each unit strain.

    T[i,j,a,b] = |Y_f| (lam d_ia d_jb + mu (d_ib d_ja + d_ij d_ab))
               + int_{Y_f} [lam div chi^{jb} d_ia + mu (d_i chi^{jb}_a + d_a chi^{jb}_i)]
               + |omega| mu~ (d_ij d_ab + d_ib d_ja)
               + int_omega [mu~ (d_i chi^{jb}_a + d_a chi^{jb}_i) + r^{jb} d_ia]
    """
    p = cs.params
    area_f, area_w = _areas(cs)
    T = area_f * lame_entries(p.lam, p.mu) + area_w * viscous_entries(p.mu_tilde)
    w = cs.space.geo.qweights
    el = (cs.mesh.tags == ELASTIC)[:, None]
    fl = (cs.mesh.tags == FLUID)[:, None]
    pw = cs.pspace.geo.qweights
    for j in range(2):
        for b in range(2):
            g = grad_at_quadpoints(cs.chi[(j + 1, b + 1)])     # g[..., a, k] = d_k chi_a
            sym = g + np.swapaxes(g, -1, -2)                   # d_k chi_a + d_a chi_k
            div = g[..., 0, 0] + g[..., 1, 1]
            int_sym_f = np.einsum("tq,tqak->ka", w * el, sym)  # [i, a]
            int_sym_w = np.einsum("tq,tqak->ka", w * fl, sym)
            int_div_f = float(np.sum(w * el * div))
            int_r = float(np.sum(pw * values_at_quadpoints(cs.r[(j + 1, b + 1)])))
            T[:, j, :, b] += (p.lam * int_div_f * _d + p.mu * int_sym_f
                              + p.mu_tilde * int_sym_w + int_r * _d)
    return HomogenizedTensor(T, "formula")


def corrected_gradients(cs: CellCorrectorSet) -> np.ndarray:
    """E^{ia} + grad chi^{ia} at quadrature points, shape (2, 2, nt, nq, 2, 2)."""
    G = np.empty((2, 2) + cs.space.grads.shape[:2] + (2, 2))
    for i in range(2):
        for a in range(2):
            G[i, a] = grad_at_quadpoints(cs.chi[(i + 1, a + 1)]) + unit_strain(i + 1, a + 1)
    return G


def tensor_from_energy(cs: CellCorrectorSet) -> HomogenizedTensor:
    """T[i,j,a,b] = a_Y(p^{ia} + chi^{ia}, p^{jb} + chi^{jb}) with p^{ia} = E^{ia} y.

    The affine part enters through its exact constant gradient.  Each
    unordered pair of index pairs is integrated once, so the result is
    symmetric under (i,a) <-> (j,b) by construction.
    """
    C = material_tensors(cs.mesh, cs.params)
    w = cs.space.geo.qweights
    G = corrected_gradients(cs)
    labels = [(0, 0), (0, 1), (1, 0), (1, 1)]
    T = np.empty((2, 2, 2, 2))
    for m, (i, a) in enumerate(labels):
        stress = np.einsum("taibj,tqbj->tqai", C, G[i, a], optimize=True)
        for n, (j, b) in enumerate(labels):
            if n < m:
                continue
            val = float(np.einsum("tq,tqai,tqai->", w, stress, G[j, b], optimize=True))
            T[i, j, a, b] = val
            T[j, i, b, a] = val
    return HomogenizedTensor(T, "energy")


def route_gap(t1: HomogenizedTensor, t2: HomogenizedTensor) -> float:
    """Maximum entry difference relative to the largest entry."""
    return float(np.max(np.abs(t1.entries - t2.entries)) / np.max(np.abs(t2.entries)))


def flux_mean(cs: CellCorrectorSet, t: HomogenizedTensor) -> dict:
    """Cell average of the corrected flux minus the homogenized tensor.

    Reported with and without the inclusion pressure; neither is asserted.
    """
    with_p = tensor_from_formula(cs).entries - t.entries
    pw = cs.pspace.geo.qweights
    press = np.zeros((2, 2, 2, 2))
    for j in range(2):
        for b in range(2):
            press[:, j, :, b] = _d * float(np.sum(pw * values_at_quadpoints(cs.r[(j + 1, b + 1)])))
    return {"with_pressure": float(np.max(np.abs(with_p))),
            "without_pressure": float(np.max(np.abs(with_p - press)))}


def check_ellipticity(t: HomogenizedTensor, params: MaterialParams,
                      n_samples: int = 10000, seed: int = 0, grid: int = 720):
    """Minimum of the rank-one form over unit (xi, eta) against the lower bound.

    The minimum combines a ``grid x grid`` angle scan, a local polish from
    the best grid point, and ``n_samples`` scrambled Sobol angle pairs.

    Returns ``(min_value, bound, passed)``.
    """
    T = t.entries
    th = np.pi * np.arange(grid) / grid
    u = np.column_stack([np.cos(th), np.sin(th)])
    XX = np.einsum("ni,nj->nij", u, u)
    Q = np.einsum("ijab,mij,nab->mn", T, XX, XX, optimize=True)
    k = np.unravel_index(np.argmin(Q), Q.shape)
    best = float(Q[k])

    def q(ang):
        xi = np.array([[np.cos(ang[0]), np.sin(ang[0])]])
        eta = np.array([[np.cos(ang[1]), np.sin(ang[1])]])
        return float(t.rank_one(xi, eta)[0])

    res = minimize(q, x0=[th[k[0]], th[k[1]]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000})
    best = min(best, float(res.fun))
    if n_samples > 0:
        m = int(np.ceil(np.log2(n_samples)))
        pts = qmc.Sobol(2, scramble=True, seed=seed).random_base2(m)[:n_samples]
        ang = 2 * np.pi * pts
        xi = np.column_stack([np.cos(ang[:, 0]), np.sin(ang[:, 0])])
        eta = np.column_stack([np.cos(ang[:, 1]), np.sin(ang[:, 1])])
        best = min(best, float(np.min(t.rank_one(xi, eta))))
    bound = params.ellipticity_bound()
    return best, bound, bool(best >= bound - 1e-9 * abs(bound))


def tensor_report(cs: CellCorrectorSet, n_samples: int = 10000, seed: int = 0) -> dict:
    tf = tensor_from_formula(cs)
    te = tensor_from_energy(cs)
    mn, bound, ok = check_ellipticity(te, cs.params, n_samples, seed)
    mnf, _, okf = check_ellipticity(tf, cs.params, n_samples, seed)
    return {
        "params": cs.params.as_dict(),
        "h_cell": cs.mesh.h_target,
        "formula": tf.as_dict(),
        "energy": te.as_dict(),
        "route_gap": route_gap(tf, te),
        "symmetry": {
            "energy_major": te.major_defect(), "energy_cross": te.cross_defect(),
            "formula_major": tf.major_defect(), "formula_cross": tf.cross_defect(),
        },
        "ellipticity": {"min_energy": mn, "min_formula": mnf, "bound": bound,
                        "pass": bool(ok and okf)},
        "flux_mean": flux_mean(cs, te),
    }


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
