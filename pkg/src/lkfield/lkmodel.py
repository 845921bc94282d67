"""Multiresolution lattice process: covariance, simulation, likelihood.

A model is a lattice, per-level autoregression center weights, per-level
marginal SD surfaces and a nugget SD surface.  The implied field is

    g(s) = sum_l phi_l(s)^T c_l,   c_l ~ N(0, Q_l^{-1}),  Q_l = B_l^T B_l,

with basis rows normalized so Var(g_l(s)) = sigma_l(s)^2 exactly.  All
dense work is confined to the number of evaluation locations; node-space
operations stay sparse throughout.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    ConfigurationError,
    DegenerateVarianceError,
    FactorizationError,
    IndefiniteSystemError,
    ParameterError,
)
from .geometry import ReplicateField, SpatialField
from .lattice import BasisMatrix, MultiresLattice, basis_matrix, normalize_basis
from .rng import STAGE_COEFFICIENTS, STAGE_NUGGET, stream
from .sar import SparseCholesky, build_sar, precision

__all__ = [
    "LKModel",
    "LikelihoodResult",
    "lk_covariance",
    "covariance_matrix",
    "simulate",
    "log_likelihood",
    "correlation_curve",
]

_LOG_2PI = math.log(2.0 * math.pi)

_DENSE_LIMIT = 4000


def _as_field(value) -> SpatialField:
    if isinstance(value, SpatialField):
        return value
    return SpatialField.constant(float(value))


class LKModel:
    """Immutable lattice-process specification with cached factorizations.

    ``a_fields`` holds one scalar or per-node weight array per level,
    ``sigma_fields`` one scalar or :class:`SpatialField` per level, and
    ``tau_field`` the nugget SD surface (default 0).  Factorizations and
    per-location designs are computed lazily and shared; instances are
    safe to use from several threads.
    """

    def __init__(self, lattice: MultiresLattice, a_fields, sigma_fields, tau_field=0.0):
        if len(a_fields) != lattice.n_levels:
            raise ParameterError(
                f"need one center-weight field per level ({lattice.n_levels}), "
                f"got {len(a_fields)}"
            )
        if len(sigma_fields) != lattice.n_levels:
            raise ParameterError(
                f"need one SD field per level ({lattice.n_levels}), "
                f"got {len(sigma_fields)}"
            )
        self.lattice = lattice
        self.a_fields = tuple(
            np.asarray(a, dtype=float) if np.ndim(a) else float(a) for a in a_fields
        )
        self.sigma_fields = tuple(_as_field(s) for s in sigma_fields)
        self.tau_field = _as_field(tau_field)
        self._lock = threading.Lock()
        self._sar = None
        self._qmats = None
        self._qfactors = None
        self._blus = None
        self._designs: OrderedDict = OrderedDict()

    # -- lazy factorizations ------------------------------------------------

    def sar_matrices(self) -> tuple[sp.csr_matrix, ...]:
        with self._lock:
            if self._sar is None:
                self._sar = tuple(
                    build_sar(lv, a) for lv, a in zip(self.lattice.levels, self.a_fields)
                )
            return self._sar

    def precision_matrices(self) -> tuple[sp.csc_matrix, ...]:
        sar = self.sar_matrices()
        with self._lock:
            if self._qmats is None:
                self._qmats = tuple(precision(b) for b in sar)
            return self._qmats

    def precision_factors(self) -> tuple[SparseCholesky, ...]:
        qmats = self.precision_matrices()
        with self._lock:
            if self._qfactors is None:
                self._qfactors = tuple(SparseCholesky(q) for q in qmats)
            return self._qfactors

    def _b_factors(self):
        sar = self.sar_matrices()
        with self._lock:
            if self._blus is None:
                self._blus = tuple(splu(b.tocsc()) for b in sar)
            return self._blus

    # -- per-location design -------------------------------------------------

    def design(self, locations) -> tuple[BasisMatrix, np.ndarray]:
        """Normalized basis and nugget SD at the given locations (cached)."""
        pts = np.asarray(locations, dtype=float)
        if pts.ndim == 1:
            pts = pts[np.newaxis, :]
        key = (pts.shape, pts.tobytes())
        with self._lock:
            hit = self._designs.get(key)
            if hit is not None:
                self._designs.move_to_end(key)
                return hit
        raw = basis_matrix(pts, self.lattice)
        sigmas = [f(pts) for f in self.sigma_fields]
        for lev, s in enumerate(sigmas):
            if np.any(s < 0):
                raise ParameterError(f"level {lev + 1} SD surface is negative somewhere")
        basis = normalize_basis(raw, self.precision_factors(), sigmas)
        tau = self.tau_field(pts)
        if np.any(tau < 0):
            raise ParameterError("nugget SD surface is negative somewhere")
        entry = (basis, tau)
        with self._lock:
            self._designs[key] = entry
            while len(self._designs) > 4:
                self._designs.popitem(last=False)
        return entry


@dataclass(frozen=True)
class LikelihoodResult:
    """Marginal log-likelihood and the GLS fixed-effect estimates."""

    loglik: float
    fixed_effects: np.ndarray


def lk_covariance(model: LKModel, s, s_prime) -> float:
    """Covariance between two locations; nugget included when they match."""
    a = np.asarray(s, dtype=float).reshape(2)
    b = np.asarray(s_prime, dtype=float).reshape(2)
    same = bool(np.array_equal(a, b))
    pts = np.array([a]) if same else np.array([a, b])
    basis, tau = model.design(pts)
    qf = model.precision_factors()
    total = 0.0
    for phi, f in zip(basis.matrices, qf):
        rows = phi.toarray()
        x = f.solve(rows.T)
        total += float(rows[0] @ x[:, -1])
    if same:
        total += float(tau[0]) ** 2
    return total


def covariance_matrix(model: LKModel, locations, include_nugget: bool = True) -> np.ndarray:
    """Dense covariance among up to a few thousand locations."""
    pts = np.asarray(locations, dtype=float)
    if pts.ndim == 1:
        pts = pts[np.newaxis, :]
    n = pts.shape[0]
    if n > _DENSE_LIMIT:
        raise ConfigurationError(
            f"dense covariance limited to {_DENSE_LIMIT} locations, got {n}"
        )
    basis, tau = model.design(pts)
    qf = model.precision_factors()
    cov = np.zeros((n, n))
    chunk = 256
    for phi, f in zip(basis.matrices, qf):
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            x = f.solve(phi[lo:hi].T.toarray())
            cov[:, lo:hi] += phi @ x
    cov = 0.5 * (cov + cov.T)
    if include_nugget:
        cov[np.diag_indices(n)] += tau**2
    return cov


def simulate(
    model: LKModel,
    locations,
    n_realizations: int,
    seed: int,
    include_nugget: bool = True,
    workers: int = 1,
) -> np.ndarray:
    """Draw realizations of the field at the given locations.

    Returns shape (n_locations, n_realizations).  Each realization r
    draws one standard normal vector per level from a stream keyed on
    (seed, stage, r, level) and solves B_l c = v, then adds the nugget
    from its own stream; output is therefore byte-identical for any
    ``workers`` value.  Threads share the sparse factorizations.
    """
    if n_realizations < 0:
        raise ParameterError("n_realizations must be nonnegative")
    pts = np.asarray(locations, dtype=float)
    if pts.ndim == 1:
        pts = pts[np.newaxis, :]
    basis, tau = model.design(pts)
    n = pts.shape[0]
    if n_realizations == 0:
        return np.zeros((n, 0))
    blus = model._b_factors()
    sizes = [lv.n_nodes for lv in model.lattice.levels]
    out = np.zeros((n, n_realizations))
    solve_lock = threading.Lock()
    with_nugget = include_nugget and bool(np.any(tau > 0))

    def fill(r_lo: int, r_hi: int):
        for lev, (phi, blu, m) in enumerate(zip(basis.matrices, blus, sizes)):
            v = np.empty((m, r_hi - r_lo))
            for j, r in enumerate(range(r_lo, r_hi)):
                v[:, j] = stream(seed, STAGE_COEFFICIENTS, r, lev).standard_normal(m)
            with solve_lock:
                coeffs = blu.solve(v)
            out[:, r_lo:r_hi] += phi @ coeffs
        if with_nugget:
            eps = np.empty((n, r_hi - r_lo))
            for j, r in enumerate(range(r_lo, r_hi)):
                eps[:, j] = stream(seed, STAGE_NUGGET, r).standard_normal(n)
            out[:, r_lo:r_hi] += tau[:, None] * eps

    workers = max(1, int(workers))
    if workers == 1 or n_realizations == 1:
        fill(0, n_realizations)
    else:
        step = -(-n_realizations // workers)
        bounds = [(lo, min(lo + step, n_realizations)) for lo in range(0, n_realizations, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: fill(*b), bounds))
    return out


def _gls_loglik(solve, logdet_sigma: float, y: np.ndarray, z: np.ndarray):
    ybar = y.mean(axis=1)
    sz = solve(z)
    normal = z.T @ sz
    try:
        d = np.linalg.solve(normal, sz.T @ ybar)
    except np.linalg.LinAlgError:
        raise ConfigurationError("covariate columns are collinear") from None
    resid = y - (z @ d)[:, None]
    quad = float(np.sum(resid * solve(resid)))
    n, m = y.shape
    ll = -0.5 * (m * n * _LOG_2PI + m * logdet_sigma + quad)
    return ll, d


def log_likelihood(model: LKModel, data: ReplicateField, covariates=None) -> LikelihoodResult:
    """Marginal Gaussian log-likelihood of replicate data under the model.

    Fixed effects (default: a constant mean) are profiled out by GLS,
    shared across replicates.  With a positive nugget everywhere the
    computation uses the sparse identities

        Sigma^{-1} = R^{-1} - R^{-1} Phi G^{-1} Phi^T R^{-1},
        log det Sigma = log det R + log det G - log det Q,
        G = Q + Phi^T R^{-1} Phi,

    so no dense n-by-n matrix is ever formed.  Zero-nugget data falls
    back to a dense factorization (limited to small n) and reports a
    rank-deficient covariance as :class:`IndefiniteSystemError`.
    """
    pts = data.geometry.locations()
    y = data.values
    n, m_rep = y.shape
    if covariates is not None:
        z = np.asarray(covariates, dtype=float)
        if z.ndim == 1:
            z = z[:, np.newaxis]
        if z.shape[0] != n:
            raise ConfigurationError(f"covariates must have {n} rows, got {z.shape[0]}")
    elif data.covariates is not None:
        z = data.covariates
    else:
        z = np.ones((n, 1))
    basis, tau = model.design(pts)
    qf = model.precision_factors()

    if np.all(tau > 0):
        rinv = 1.0 / tau**2
        phi = sp.hstack(basis.matrices).tocsr()
        q_block = sp.block_diag(model.precision_matrices(), format="csc")
        g = q_block + (phi.T @ sp.diags(rinv) @ phi)
        gf = SparseCholesky(g)
        logdet_q = sum(f.logdet for f in qf)
        logdet_sigma = float(np.sum(np.log(tau**2))) + gf.logdet - logdet_q

        def solve(x: np.ndarray) -> np.ndarray:
            rx = rinv[:, None] * x
            return rx - rinv[:, None] * (phi @ gf.solve(phi.T @ rx))

        ll, d = _gls_loglik(solve, logdet_sigma, y, z)
        return LikelihoodResult(loglik=ll, fixed_effects=d)

    # Zero nugget somewhere: no R^{-1}, fall back to the dense covariance.
    if n > _DENSE_LIMIT:
        raise ConfigurationError(
            f"zero-nugget likelihood needs a dense factorization, "
            f"limited to {_DENSE_LIMIT} locations (got {n})"
        )
    cov = covariance_matrix(model, pts, include_nugget=True)
    try:
        chol = scipy.linalg.cho_factor(cov, lower=True)
    except scipy.linalg.LinAlgError:
        raise IndefiniteSystemError(
            "observation covariance is rank deficient and the nugget is zero"
        ) from None
    logdet_sigma = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    ll, d = _gls_loglik(lambda x: scipy.linalg.cho_solve(chol, x), logdet_sigma, y, z)
    return LikelihoodResult(loglik=ll, fixed_effects=d)


def correlation_curve(model: LKModel, center, targets) -> np.ndarray:
    """Correlation between a center point and each target location.

    Returns an array of (distance, correlation) rows, nugget-free.
    Zero process variance at any involved location is an error.
    """
    c = np.asarray(center, dtype=float).reshape(2)
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[np.newaxis, :]
    pts = np.vstack([c[np.newaxis, :], t])
    cov = covariance_matrix(model, pts, include_nugget=False)
    var = np.diag(cov)
    if np.any(var <= 0):
        bad = int(np.argmax(var <= 0))
        raise DegenerateVarianceError(
            f"zero process variance at {tuple(pts[bad])}; correlation undefined"
        )
    corr = cov[0, 1:] / np.sqrt(var[0] * var[1:])
    dist = np.hypot(t[:, 0] - c[0], t[:, 1] - c[1])
    return np.column_stack([dist, corr])
