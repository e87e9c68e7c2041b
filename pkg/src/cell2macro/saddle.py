"""Constrained saddle-point solves and the discrete inf-sup constant.

The augmented system is

    [ A  B^T  C^T ] [u]   [f_u]
    [ B  0    0   ] [p] = [f_p]
    [ C  0    0   ] [l]   [f_c]

with ``B`` the pressure coupling and ``C`` multiplier rows (zero mean,
rigid-motion orthogonality).  The primary path is a sparse LU
factorization; MINRES is the fallback when the factorization does not
fit in memory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence, SingularSystem, Unsupported

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
MAX_INF_SUP_PRESSURE_DOFS = 5000


def _empty(n_rows, n_cols):
    return sp.csr_matrix((n_rows, n_cols))


@dataclass(eq=False)
class SaddleSystem:
    """Blocks of the augmented system; missing blocks default to empty."""

    A: sp.spmatrix
    B: sp.spmatrix | None = None
    C: sp.spmatrix | None = None
    rhs_u: np.ndarray | None = None
    rhs_p: np.ndarray | None = None
    rhs_c: np.ndarray | None = None

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        self.B = _empty(0, n) if self.B is None else sp.csr_matrix(self.B)
        self.C = _empty(0, n) if self.C is None else sp.csr_matrix(self.C)
        if self.B.shape[1] != n or self.C.shape[1] != n:
            raise ValueError("B and C must have as many columns as A")
        self.rhs_u = np.zeros(n) if self.rhs_u is None else np.asarray(self.rhs_u, float)
        self.rhs_p = np.zeros(self.n_p) if self.rhs_p is None else np.asarray(self.rhs_p, float)
        self.rhs_c = np.zeros(self.n_c) if self.rhs_c is None else np.asarray(self.rhs_c, float)
        if (self.rhs_u.shape != (n,) or self.rhs_p.shape != (self.n_p,)
                or self.rhs_c.shape != (self.n_c,)):
            raise ValueError("right-hand side blocks have wrong lengths")

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.B.shape[0]

    @property
    def n_c(self) -> int:
        return self.C.shape[0]

    def matrix(self) -> sp.csr_matrix:
        """Full augmented matrix K."""
        n_p, n_c = self.n_p, self.n_c
        return sp.bmat([
            [self.A, self.B.T, self.C.T],
            [self.B, _empty(n_p, n_p), _empty(n_p, n_c)],
            [self.C, _empty(n_c, n_p), _empty(n_c, n_c)],
        ], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p, self.rhs_c])

    def with_rhs(self, rhs_u=None, rhs_p=None, rhs_c=None) -> "SaddleSystem":
        return SaddleSystem(self.A, self.B, self.C, rhs_u, rhs_p, rhs_c)


@dataclass
class SaddleSolution:
    u: np.ndarray
    p: np.ndarray
    multipliers: np.ndarray
    residual: float
    rhs_norm: float
    stability_ratio: float
    method: str
    refinement_steps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def relative_residual(self) -> float:
        return self.residual / (1.0 + self.rhs_norm)


class Factorization:
    """Reusable sparse LU of an augmented matrix with residual refinement.

    Multiplier rows are left unscaled and ordered last, so threshold
    pivoting never promotes the (possibly dense) constraint rows early.
    """

    def __init__(self, system: SaddleSystem):
        self.system = system
        K = system.matrix().tocsc()
        n = K.shape[0]
        if system.n_c and np.any(abs(system.C).max(axis=1).toarray() == 0):
            raise SingularSystem("zero constraint row")
        self.K = K
        self.perm = saddle_ordering(system)
        Kp = K[self.perm][:, self.perm].tocsc()
        # the ordering puts every pressure unknown after its velocity
        # neighbours, so small diagonal pivots are rare and a loose
        # threshold keeps the fill of the displacement ordering; the retry
        # uses full partial pivoting with a general column ordering
        err = ""
        for thresh, spec, M in ((1e-3, "NATURAL", Kp), (1.0, "COLAMD", K)):
            try:
                self.lu = spla.splu(M, permc_spec=spec, diag_pivot_thresh=thresh,
                                    options={"SymmetricMode": thresh < 1.0})
            except RuntimeError as exc:
                err = f"factorization breakdown: {exc}"
                continue
            self._permuted = M is Kp
            d = np.abs(self.lu.U.diagonal())
            self.pivot_ratio = float(d.min() / d.max()) if n else 1.0
            if self.pivot_ratio > PIVOT_TOL:
                return
            err = (f"pivot ratio {self.pivot_ratio:.3e} below {PIVOT_TOL:g}; "
                   "check for dependent constraints or an unconstrained kernel")
        raise SingularSystem(err)

    def _raw_solve(self, f):
        if not self._permuted:
            return self.lu.solve(f)
        z = np.empty_like(f)
        z[self.perm] = self.lu.solve(f[self.perm])
        return z

    def solve_vector(self, f: np.ndarray, max_refine: int = 3):
        z = self._raw_solve(f)
        steps = 0
        fn = np.linalg.norm(f)
        for _ in range(max_refine):
            r = f - self.K @ z
            if np.linalg.norm(r) <= 1e-3 * RESIDUAL_TOL * (1.0 + fn):
                break
            z = z + self._raw_solve(r)
            steps += 1
        res = float(np.linalg.norm(f - self.K @ z))
        return z, res, steps

    def solve(self, rhs_u=None, rhs_p=None, rhs_c=None) -> SaddleSolution:
        sysm = self.system.with_rhs(rhs_u, rhs_p, rhs_c)
        f = sysm.rhs()
        z, res, steps = self.solve_vector(f)
        return _package(sysm, z, res, "lu", steps, {"pivot_ratio": self.pivot_ratio})


def saddle_ordering(system: SaddleSystem) -> np.ndarray:
    """Symmetric elimination order for the augmented matrix.

    Displacements follow a minimum-degree order of |A| + |B|^T |B|; each
    pressure unknown is placed right after the last displacement it couples
    to; multiplier rows come last.
    """
    n_u, n_p, n_c = system.n_u, system.n_p, system.n_c
    G = (abs(system.A) + abs(system.B).T @ abs(system.B)).tocsc()
    # unit pattern made strictly diagonally dominant: only the order matters
    G.data[:] = 1.0
    G = G + sp.diags(np.diff(G.indptr) + 1.0, format="csc")
    lu = spla.splu(G, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    pos = lu.perm_c.astype(float)
    B = system.B.tocsr()
    ppos = np.empty(n_p)
    for k in range(n_p):
        cols = B.indices[B.indptr[k]:B.indptr[k + 1]]
        ppos[k] = (pos[cols].max() if len(cols) else n_u) + 0.5
    cpos = n_u + 1.0 + np.arange(n_c)
    return np.argsort(np.concatenate([pos, ppos, cpos]), kind="stable")


def _package(system, z, res, method, steps=0, info=None) -> SaddleSolution:
    f = system.rhs()
    fn = float(np.linalg.norm(f))
    n_u, n_p = system.n_u, system.n_p
    zu = z[:n_u + n_p]
    ratio = float(np.linalg.norm(zu) / fn) if fn > 0 else 0.0
    sol = SaddleSolution(u=z[:n_u], p=z[n_u:n_u + n_p], multipliers=z[n_u + n_p:],
                         residual=res, rhs_norm=fn, stability_ratio=ratio,
                         method=method, refinement_steps=steps, info=info or {})
    if res > RESIDUAL_TOL * (1.0 + fn):
        raise NonConvergence(
            f"residual {res:.3e} exceeds {RESIDUAL_TOL:g}*(1+|f|) after solve")
    return sol


def factor(system: SaddleSystem) -> Factorization:
    return Factorization(system)


def solve(system: SaddleSystem, method: str = "auto", x0=None,
          maxiter: int = 20000) -> SaddleSolution:
    """Solve the augmented system.

    Parameters
    ----------
    method : {"auto", "lu", "minres"}
        ``auto`` factorizes and falls back to MINRES on MemoryError.
    x0 : array, optional
        Initial guess for the iterative path.
    """
    if method in ("auto", "lu"):
        try:
            return Factorization(system).solve(system.rhs_u, system.rhs_p, system.rhs_c)
        except MemoryError:
            if method == "lu":
                raise
            log.warning("sparse factorization ran out of memory; using MINRES")
    if method not in ("auto", "minres", "lu"):
        raise ValueError(f"unknown method {method!r}")
    return solve_minres(system, x0=x0, maxiter=maxiter)


def solve_minres(system: SaddleSystem, x0=None, maxiter: int = 20000) -> SaddleSolution:
    """Preconditioned MINRES with a positive block-diagonal preconditioner.

    The displacement block uses diag(A); pressure and multiplier blocks use
    the row sums of squares of their coupling rows scaled by diag(A)^{-1},
    a cheap Schur-complement diagonal.
    """
    K = system.matrix()
    f = system.rhs()
    dA = system.A.diagonal().copy()
    dA[dA <= 0] = 1.0
    BC = sp.vstack([system.B, system.C]).tocsr()
    if BC.shape[0]:
        schur = np.asarray(BC.multiply(BC) @ (1.0 / dA)).ravel()
        schur[schur <= 0] = 1.0
    else:
        schur = np.zeros(0)
    dinv = 1.0 / np.concatenate([dA, schur])
    M = spla.LinearOperator(K.shape, matvec=lambda v: dinv * v)
    fn = np.linalg.norm(f)
    if fn == 0:
        return _package(system, np.zeros_like(f), 0.0, "minres")
    # MINRES measures the preconditioned residual; tighten until the true
    # residual meets the contract
    rtol = 1e-12
    z = x0
    for _ in range(4):
        try:
            z, info = spla.minres(K, f, x0=z, M=M, rtol=rtol, maxiter=maxiter)
        except TypeError:  # older scipy
            z, info = spla.minres(K, f, x0=z, M=M, tol=rtol, maxiter=maxiter)
        res = float(np.linalg.norm(f - K @ z))
        if res <= RESIDUAL_TOL * (1.0 + fn):
            return _package(system, z, res, "minres", info={"minres_info": int(info)})
        if info > 0:
            break
        rtol *= 1e-2
    raise NonConvergence(f"MINRES stopped with residual {res:.3e}")


def dense_solve(system: SaddleSystem) -> np.ndarray:
    """Dense LU oracle for small systems; returns the full solution vector."""
    K = system.matrix().toarray()
    return scipy.linalg.solve(K, system.rhs())


def dump_matrix_market(system: SaddleSystem, path) -> None:
    """Write the augmented matrix as a coordinate real general Matrix Market file."""
    scipy.io.mmwrite(str(path), system.matrix().tocoo(), field="real",
                     symmetry="general")


# --------------------------------------------------------------------------
# inf-sup constant
# --------------------------------------------------------------------------

def _check_inf_sup_inputs(system, mass_p):
    n_p = system.n_p
    if n_p > MAX_INF_SUP_PRESSURE_DOFS:
        raise Unsupported(
            f"inf-sup estimation limited to {MAX_INF_SUP_PRESSURE_DOFS} pressure dofs, got {n_p}")
    if mass_p.shape != (n_p, n_p):
        raise ValueError("pressure mass does not match B")


def estimate_inf_sup(system: SaddleSystem, mass_u, mass_p, block: int = 4,
                     seed: int = 0, tol: float = 1e-10, maxiter: int = 500) -> float:
    """Smallest generalized singular value of B in the (mass_u, mass_p) geometry.

    beta^2 is the smallest eigenvalue of ``B mass_u^{-1} B^T x = theta mass_p x``,
    found by block inverse iteration with Rayleigh-Ritz.  Each inverse step
    solves the Schur system by conjugate gradients preconditioned with
    ``mass_p``.  The start block is drawn from a fixed-seed generator.
    """
    _check_inf_sup_inputs(system, mass_p)
    B = system.B
    n_p = system.n_p
    if n_p == 0 or B.nnz == 0 or abs(B).max() == 0:
        return 0.0
    Ku = spla.splu(sp.csc_matrix(mass_u))
    Mp = sp.csr_matrix(mass_p)
    Mlu = spla.splu(sp.csc_matrix(Mp))
    S = spla.LinearOperator((n_p, n_p), matvec=lambda x: B @ Ku.solve(B.T @ x))
    P = spla.LinearOperator((n_p, n_p), matvec=Mlu.solve)

    k = min(block, n_p)
    X = np.random.default_rng(seed).standard_normal((n_p, k))
    theta_old = np.inf
    for _ in range(maxiter):
        Y = np.empty_like(X)
        rhs = Mp @ X
        for c in range(k):
            y, info = _cg(S, rhs[:, c], P)
            if info != 0:
                raise NonConvergence("CG on the pressure Schur complement did not converge")
            Y[:, c] = y
        SY = np.column_stack([S @ Y[:, c] for c in range(k)])
        theta, V = scipy.linalg.eigh(Y.T @ SY, Y.T @ (Mp @ Y))
        X = Y @ V
        X /= np.sqrt(np.einsum("ik,ik->k", X, Mp @ X))
        if abs(theta[0] - theta_old) <= tol * abs(theta[0]):
            return float(np.sqrt(max(theta[0], 0.0)))
        theta_old = theta[0]
    raise NonConvergence("inverse iteration for the inf-sup constant did not converge")


def _cg(A, b, M):
    try:
        return spla.cg(A, b, M=M, rtol=1e-13, atol=0.0, maxiter=2000)
    except TypeError:  # older scipy
        return spla.cg(A, b, M=M, tol=1e-13, atol=0.0, maxiter=2000)


def inf_sup_dense(system: SaddleSystem, mass_u, mass_p) -> float:
    """Dense generalized-eigenvalue oracle for the inf-sup constant."""
    _check_inf_sup_inputs(system, mass_p)
    if system.n_p == 0 or system.B.nnz == 0:
        return 0.0
    Bd = system.B.toarray()
    Ku = mass_u.toarray()
    S = Bd @ scipy.linalg.solve(Ku, Bd.T, assume_a="pos")
    S = 0.5 * (S + S.T)
    theta = scipy.linalg.eigh(S, mass_p.toarray(), eigvals_only=True)
    return float(np.sqrt(max(theta[0], 0.0)))
