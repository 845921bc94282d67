"""Windowed maximum-likelihood estimation of local Matérn parameters.

Each grid box gets the stationary fit of the window centered on it
(edge boxes reuse the nearest fully interior window).  The likelihood
is profiled: for fixed range theta and noise-to-signal ratio
lambda = tau^2/sigma^2, the GLS mean and the variance sigma^2 have
closed forms, leaving a two-parameter search over (log theta,
log lambda).  Replicates are independent and share the mean.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy import optimize

from .errors import ConfigurationError, ParameterError
from .geometry import GridGeometry, ParamFields, ReplicateField, SpatialField
from .kernels import matern_correlation
from .rng import STAGE_ENSEMBLE, stream

__all__ = [
    "WindowSpec",
    "WindowFit",
    "LocalEstimates",
    "window_mle",
    "sweep_windows",
    "adjust_estimates",
    "synthetic_ensemble",
]

_PENALTY = 1e12


@dataclass(frozen=True)
class WindowSpec:
    """Settings for one window fit.

    Bounds are in natural units; the search runs in log space.  ``nu``
    is the fixed Matérn smoothness of the local family.
    """

    width: int = 11
    nu: float = 1.0
    theta_bounds: tuple[float, float] = (1e-2, 1e2)
    lambda_bounds: tuple[float, float] = (1e-8, 1e3)
    n_starts: int = 3
    max_iter: int = 200

    def __post_init__(self):
        if self.width < 3 or self.width % 2 == 0:
            raise ConfigurationError(f"window width must be odd and >= 3, got {self.width}")
        if not self.nu > 0:
            raise ParameterError(f"nu must be positive, got {self.nu}")
        for name, (lo, hi) in (
            ("theta", self.theta_bounds),
            ("lambda", self.lambda_bounds),
        ):
            if not (0 < lo < hi):
                raise ParameterError(f"{name} bounds must satisfy 0 < lo < hi")
        if self.n_starts < 1:
            raise ParameterError("need at least one start")
        if self.max_iter < 10:
            raise ParameterError("max_iter too small to optimize anything")


@dataclass(frozen=True)
class WindowFit:
    """Stationary parameters fitted to one window."""

    theta: float
    sigma: float
    tau: float
    loglik: float
    converged: bool
    degenerate: bool


def _unique_distances(coords: np.ndarray):
    d = np.hypot(
        coords[:, 0][:, None] - coords[:, 0][None, :],
        coords[:, 1][:, None] - coords[:, 1][None, :],
    )
    du, inv = np.unique(d, return_inverse=True)
    return du, inv.reshape(d.shape)


def _profiled_negloglik(logtheta, loglam, du, inv, y, z, nu, log_bounds):
    (lt_lo, lt_hi), (ll_lo, ll_hi) = log_bounds
    excess = (
        max(lt_lo - logtheta, 0.0)
        + max(logtheta - lt_hi, 0.0)
        + max(ll_lo - loglam, 0.0)
        + max(loglam - ll_hi, 0.0)
    )
    if excess > 0:
        return _PENALTY * (1.0 + excess), None
    n, m = y.shape
    theta = np.exp(logtheta)
    lam = np.exp(loglam)
    w = matern_correlation(du, theta, nu)[inv]
    w[np.diag_indices(n)] += lam
    try:
        cf = scipy.linalg.cho_factor(w, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return _PENALTY, None
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    wz = scipy.linalg.cho_solve(cf, z, check_finite=False)
    normal = z.T @ wz
    ybar = y.mean(axis=1)
    try:
        d = np.linalg.solve(normal, wz.T @ ybar)
    except np.linalg.LinAlgError:
        return _PENALTY, None
    resid = y - (z @ d)[:, None]
    rss = float(np.sum(resid * scipy.linalg.cho_solve(cf, resid, check_finite=False)))
    if not rss > 0:
        return _PENALTY, None
    sigma2 = rss / (n * m)
    nll = 0.5 * (n * m * (np.log(2.0 * np.pi * sigma2) + 1.0) + m * logdet)
    return nll, (sigma2, lam, d)


def _fit_arrays(y: np.ndarray, z: np.ndarray, du, inv, spec: WindowSpec) -> WindowFit:
    if np.all(np.std(y, axis=1) == 0.0):
        return WindowFit(
            theta=np.nan, sigma=0.0, tau=0.0, loglik=np.nan,
            converged=False, degenerate=True,
        )
    log_bounds = (
        tuple(np.log(spec.theta_bounds)),
        tuple(np.log(spec.lambda_bounds)),
    )

    def objective(x):
        return _profiled_negloglik(x[0], x[1], du, inv, y, z, spec.nu, log_bounds)[0]

    extent = float(du.max())
    theta_starts = [0.3 * extent, 0.1 * extent, 0.03 * extent]
    lam_starts = [0.05, 0.05, 0.5]
    best = None
    any_success = False
    for k in range(spec.n_starts):
        t0 = np.clip(theta_starts[k % 3], *spec.theta_bounds)
        l0 = np.clip(lam_starts[k % 3], *spec.lambda_bounds)
        res = optimize.minimize(
            objective,
            x0=[np.log(t0), np.log(l0)],
            method="Nelder-Mead",
            options={
                "xatol": 1e-4,
                "fatol": 1e-7,
                "maxiter": spec.max_iter,
                "maxfev": 2 * spec.max_iter,
            },
        )
        any_success = any_success or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    lt, ll = best.x
    # One-dimensional refinement of the range at the selected noise ratio.
    f_lo, f_mid, f_hi = (objective([v, ll]) for v in (lt - 0.25, lt, lt + 0.25))
    if f_mid < f_lo and f_mid < f_hi:
        ref = optimize.minimize_scalar(
            lambda v: objective([v, ll]),
            bracket=(lt - 0.25, lt, lt + 0.25),
            method="golden",
            options={"xtol": 1e-6, "maxiter": 100},
        )
        if ref.fun < best.fun:
            lt = float(ref.x)
    nll, aux = _profiled_negloglik(lt, ll, du, inv, y, z, spec.nu, log_bounds)
    if aux is None:
        return WindowFit(
            theta=np.nan, sigma=np.nan, tau=np.nan, loglik=np.nan,
            converged=False, degenerate=False,
        )
    sigma2, lam, _ = aux
    theta = float(np.exp(lt))
    sigma = float(np.sqrt(sigma2))
    tau = float(sigma * np.sqrt(lam))

    def at_bound(value, bounds):
        lo, hi = np.log(bounds)
        return min(abs(np.log(value) - lo), abs(np.log(value) - hi)) < 1e-6

    pinned = at_bound(theta, spec.theta_bounds) and at_bound(lam, spec.lambda_bounds)
    converged = any_success and not pinned and nll < _PENALTY
    return WindowFit(
        theta=theta, sigma=sigma, tau=tau, loglik=float(-nll),
        converged=converged, degenerate=False,
    )


def window_mle(data: ReplicateField, spec: WindowSpec) -> WindowFit:
    """Fit stationary Matérn-plus-nugget parameters to one window.

    ``data`` holds the window's replicates; the mean is a constant per
    window unless the field carries covariates (passed through as-is,
    including any intercept column).  Windows whose replicates show no
    variation anywhere come back flagged degenerate instead of fitted.
    """
    if data.n_replicates < 2:
        raise ParameterError(
            f"need at least 2 replicates to separate signal from noise, "
            f"got {data.n_replicates}"
        )
    coords = data.geometry.locations()
    du, inv = _unique_distances(coords)
    z = data.covariates if data.covariates is not None else np.ones((coords.shape[0], 1))
    return _fit_arrays(data.values, z, du, inv, spec)


def _fit_task(y, z, du, inv, spec):
    t0 = time.perf_counter()
    fit = _fit_arrays(y, z, du, inv, spec)
    return fit, time.perf_counter() - t0


@dataclass(frozen=True)
class LocalEstimates:
    """Per-box parameter estimates from the window sweep.

    All arrays follow grid ordering (x fastest).  ``window_ix`` and
    ``window_iy`` record which interior window center served each box;
    ``task_seconds`` holds per-window wall times in task order for the
    scaling report.  Timing fields are None when the estimates were
    read back from a surface file.
    """

    geometry: GridGeometry
    nu: float
    theta: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    loglik: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray
    sigma_obs: np.ndarray
    window_ix: np.ndarray
    window_iy: np.ndarray
    task_seconds: np.ndarray | None = None
    setup_seconds: float | None = None
    total_seconds: float | None = None
    workers: int | None = None

    def to_param_fields(self) -> ParamFields:
        """Bilinear parameter surfaces backed by the estimate grids."""
        return ParamFields(
            theta=SpatialField.from_grid(self.geometry, self.theta),
            sigma=SpatialField.from_grid(self.geometry, self.sigma),
            tau=SpatialField.from_grid(self.geometry, self.tau),
            nu=self.nu,
        )


def sweep_windows(data: ReplicateField, spec: WindowSpec, workers: int = 1) -> LocalEstimates:
    """Fit every grid box by moving the window across the grid.

    Interior boxes get their own centered window; boxes closer than
    half a window to the boundary reuse the nearest interior center's
    fit.  Fits are deterministic, so results are identical for any
    ``workers`` value; workers > 1 runs window fits in separate
    processes.
    """
    t_setup = time.perf_counter()
    g = data.geometry
    w = spec.width
    if g.nx < w or g.ny < w:
        raise ConfigurationError(
            f"grid ({g.nx} x {g.ny}) is smaller than one window ({w})"
        )
    hw = w // 2
    cx = np.arange(hw, g.nx - hw)
    cy = np.arange(hw, g.ny - hw)
    # All interior windows share the same offset pattern, hence the same
    # unique-distance structure.
    offs_x = g.dx * np.arange(w)
    offs_y = g.dy * np.arange(w)
    wcoords = np.column_stack(
        [np.tile(offs_x, w), np.repeat(offs_y, w)]
    )
    du, inv = _unique_distances(wcoords)

    def window_rows(icx: int, icy: int) -> np.ndarray:
        xs = np.arange(icx - hw, icx + hw + 1)
        ys = np.arange(icy - hw, icy + hw + 1)
        return (ys[:, None] * g.nx + xs[None, :]).ravel()

    tasks = [(icx, icy) for icy in cy for icx in cx]
    have_cov = data.covariates is not None
    payloads = []
    for icx, icy in tasks:
        rows = window_rows(icx, icy)
        z = data.covariates[rows] if have_cov else np.ones((rows.size, 1))
        payloads.append((data.values[rows], z))
    setup_seconds = time.perf_counter() - t_setup

    t_compute = time.perf_counter()
    if workers <= 1:
        results = [_fit_task(y, z, du, inv, spec) for y, z in payloads]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=workers, backend="loky")(
            delayed(_fit_task)(y, z, du, inv, spec) for y, z in payloads
        )
    total_seconds = time.perf_counter() - t_compute

    n = g.n_points
    theta = np.empty(n)
    sigma = np.empty(n)
    tau = np.empty(n)
    loglik = np.empty(n)
    converged = np.zeros(n, dtype=bool)
    degenerate = np.zeros(n, dtype=bool)
    window_ix = np.empty(n, dtype=np.int64)
    window_iy = np.empty(n, dtype=np.int64)
    n_cx = cx.size
    for iy in range(g.ny):
        ucy = min(max(iy, hw), g.ny - 1 - hw)
        for ix in range(g.nx):
            ucx = min(max(ix, hw), g.nx - 1 - hw)
            fit = results[(ucy - hw) * n_cx + (ucx - hw)][0]
            i = iy * g.nx + ix
            theta[i] = fit.theta
            sigma[i] = fit.sigma
            tau[i] = fit.tau
            loglik[i] = fit.loglik
            converged[i] = fit.converged
            degenerate[i] = fit.degenerate
            window_ix[i] = ucx
            window_iy[i] = ucy
    return LocalEstimates(
        geometry=g,
        nu=spec.nu,
        theta=theta,
        sigma=sigma,
        tau=tau,
        loglik=loglik,
        converged=converged,
        degenerate=degenerate,
        sigma_obs=np.std(data.values, axis=1, ddof=1),
        window_ix=window_ix,
        window_iy=window_iy,
        task_seconds=np.array([sec for _, sec in results]),
        setup_seconds=setup_seconds,
        total_seconds=total_seconds,
        workers=int(workers),
    )


def adjust_estimates(
    est: LocalEstimates, tau_floor: float = 0.003, theta_cap: float = 15.0
) -> LocalEstimates:
    """Apply the standard post-fit repairs, returning new estimates.

    Boxes where the fitted nugget is below ``tau_floor`` while the
    fitted SD exceeds the observed sample SD get sigma replaced by the
    sample SD (the likelihood traded noise for signal); ranges above
    ``theta_cap`` are truncated to it.  Both comparisons are strict, so
    boxes sitting exactly at a threshold are untouched and applying the
    adjustment twice changes nothing.
    """
    if not tau_floor >= 0:
        raise ParameterError(f"tau floor must be nonnegative, got {tau_floor}")
    if not theta_cap > 0:
        raise ParameterError(f"theta cap must be positive, got {theta_cap}")
    sigma = est.sigma.copy()
    theta = est.theta.copy()
    with np.errstate(invalid="ignore"):
        inflate = (est.tau < tau_floor) & (est.sigma > est.sigma_obs)
        sigma[inflate] = est.sigma_obs[inflate]
        overrange = est.theta > theta_cap
        theta[overrange] = theta_cap
    return replace(est, sigma=sigma, theta=theta)


def synthetic_ensemble(
    geometry: GridGeometry,
    fields: ParamFields,
    n_replicates: int,
    seed: int,
    method: str = "auto",
    window: int = 11,
) -> ReplicateField:
    """Generate a replicate ensemble with known parameters.

    ``method='exact'`` draws from the dense stationary covariance and
    requires constant parameter surfaces; ``method='local'`` uses the
    windowed locally stationary simulator and accepts any surfaces.
    ``'auto'`` picks exact when the surfaces are constant over the grid.
    """
    from .kernels import MaternParams, matern_covariance
    from .oracle import dense_simulate, local_simulate

    if n_replicates < 1:
        raise ParameterError("need at least one replicate")
    locs = geometry.locations()
    th, sg, ta = fields.at(locs)
    constant = all(np.ptp(v) == 0.0 for v in (th, sg, ta))
    if method == "auto":
        method = "exact" if constant else "local"
    if method == "exact":
        if not constant:
            raise ConfigurationError(
                "exact ensembles need constant parameter surfaces; use method='local'"
            )
        d = np.hypot(
            locs[:, 0][:, None] - locs[:, 0][None, :],
            locs[:, 1][:, None] - locs[:, 1][None, :],
        )
        params = MaternParams(sigma=sg[0], theta=th[0], nu=fields.nu, tau=ta[0])
        cov = matern_covariance(d, params)
        return ReplicateField(geometry, dense_simulate(cov, n_replicates, seed=seed))
    if method == "local":
        cols = [
            local_simulate(fields, geometry, window=window, rng=stream(seed, STAGE_ENSEMBLE, m))
            for m in range(n_replicates)
        ]
        return ReplicateField(geometry, np.column_stack(cols))
    raise ConfigurationError(f"unknown ensemble method {method!r}")
