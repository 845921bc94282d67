"""Spatial autoregression on lattice nodes and its sparse factorization.

Level-l coefficients c satisfy B c = v with v standard normal, where B
has the center weight a_k on the diagonal and -1 at the (at most four)
nearest lattice neighbors.  The implied precision is Q = B^T B, sparse
with at most 13 nonzeros per row.  Center weights must stay above 4;
kappa = 1 / sqrt(a - 4) is the correlation range this induces, in units
of the lattice spacing, so weights just above 4 give long-range fields.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FactorizationError, ParameterError, StabilityError
from .lattice import LatticeLevel

__all__ = [
    "build_sar",
    "precision",
    "a_to_kappa",
    "simulate_coefficients",
    "SparseCholesky",
]


def _check_a(a: np.ndarray):
    bad = a <= 4.0
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise StabilityError(
            f"autoregressive center weight must exceed 4 for a stable process; "
            f"node {idx} has a = {a.flat[idx]}"
        )


def build_sar(level: LatticeLevel, a_field) -> sp.csr_matrix:
    """Autoregression matrix B for one lattice level.

    ``a_field`` is a scalar or an array of per-node center weights in
    node ordering.  Rows hold a_k on the diagonal and -1 at each
    existing nearest neighbor; buffer and edge nodes simply have fewer
    neighbors.
    """
    n = level.n_nodes
    a = np.asarray(a_field, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ParameterError(
            f"a_field must be scalar or have one weight per node ({n}), got {a.shape}"
        )
    _check_a(a)
    nx, ny = level.nx, level.ny
    idx = np.arange(n, dtype=np.intp)
    ix = idx % nx
    iy = idx // nx
    rows = [idx]
    cols = [idx]
    data = [a]
    for cond, step in (
        (ix > 0, -1),
        (ix < nx - 1, 1),
        (iy > 0, -nx),
        (iy < ny - 1, nx),
    ):
        rows.append(idx[cond])
        cols.append(idx[cond] + step)
        data.append(np.full(cond.sum(), -1.0))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return mat.tocsr()


def precision(b: sp.spmatrix) -> sp.csc_matrix:
    """Coefficient precision Q = B^T B, symmetrized exactly."""
    if b.shape[0] != b.shape[1]:
        raise ParameterError(f"autoregression matrix must be square, got {b.shape}")
    q = (b.T @ b).tocsc()
    # B^T B is symmetric in exact arithmetic; enforce it bitwise.
    return (q + q.T) * 0.5


def a_to_kappa(a):
    """Correlation range implied by center weight a, in lattice spacings.

    kappa = 1 / sqrt(a - 4); weights approaching 4 from above give
    arbitrarily long range, large weights give nearly independent
    coefficients.
    """
    arr = np.asarray(a, dtype=float)
    _check_a(arr)
    out = 1.0 / np.sqrt(arr - 4.0)
    return out if out.ndim else float(out)


def simulate_coefficients(b: sp.spmatrix, noise=None, seed=None) -> np.ndarray:
    """Draw coefficients with covariance Q^{-1} = (B^T B)^{-1}.

    Solves B c = v for a standard normal vector v, which gives
    Var(c) = B^{-1} B^{-T} exactly; no dense covariance is formed.
    Pass ``noise`` to reuse an existing draw, otherwise ``seed`` feeds a
    fresh generator.
    """
    n = b.shape[0]
    if b.shape[0] != b.shape[1]:
        raise ParameterError(f"autoregression matrix must be square, got {b.shape}")
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal(n)
    v = np.asarray(noise, dtype=float)
    if v.shape != (n,):
        raise ParameterError(f"noise must have shape ({n},), got {v.shape}")
    try:
        lu = splu(b.tocsc())
    except RuntimeError as exc:
        raise FactorizationError(f"autoregression matrix is singular: {exc}") from None
    return lu.solve(v)


class SparseCholesky:
    """Symmetric factorization of a sparse SPD matrix.

    Backed by a sparse LU restricted to symmetric mode (no partial
    pivoting, fill-reducing ordering for A^T + A), which on SPD input
    is the Cholesky factorization up to row scaling.  Exposes solves
    against the original matrix and its log-determinant; refuses input
    that is not symmetric positive definite.
    """

    def __init__(self, q: sp.spmatrix):
        q = sp.csc_matrix(q)
        if q.shape[0] != q.shape[1]:
            raise FactorizationError(f"matrix must be square, got {q.shape}")
        asym = abs(q - q.T).max()
        scale = abs(q).max()
        if asym > 1e-10 * max(scale, 1.0):
            raise FactorizationError(
                f"matrix is not symmetric (max asymmetry {asym:.3e})"
            )
        try:
            self._lu = splu(
                q,
                diag_pivot_thresh=0.0,
                permc_spec="MMD_AT_PLUS_A",
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise FactorizationError(f"factorization failed: {exc}") from None
        diag_u = self._lu.U.diagonal()
        if np.any(diag_u <= 0):
            raise FactorizationError("matrix is not positive definite")
        self._logdet = float(np.sum(np.log(diag_u)))
        self.shape = q.shape

    @property
    def logdet(self) -> float:
        """log det of the factored matrix."""
        return self._logdet

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve Q x = rhs for one vector or a dense column block."""
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def reconstruct(self) -> sp.csc_matrix:
        """Multiply the factors back together (testing hook)."""
        n = self.shape[0]
        ones = np.ones(n)
        pr = sp.csc_matrix((ones, (self._lu.perm_r, np.arange(n))), shape=(n, n))
        pc = sp.csc_matrix((ones, (np.arange(n), self._lu.perm_c)), shape=(n, n))
        return (pr.T @ (self._lu.L @ self._lu.U) @ pc.T).tocsc()
