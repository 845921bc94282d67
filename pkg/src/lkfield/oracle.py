"""Brute-force references: convolution covariance and direct simulators.

The convolution (process-convolution) covariance

    k(s, s') = sigma(s) sigma(s') * integral H(s, u) H(s', u) du,
    H(x, u) = psi(|u - x| / theta(x)) / theta(x),

is evaluated by midpoint quadrature on a rectangular grid.  With a
normalized kernel (integral of psi^2 over the plane equal to one) and a
range surface evaluated only at the two endpoints, constant-theta pairs
reproduce a stationary Matérn exactly, which is what makes this an
oracle for the lattice model.  Everything here favors transparency over
speed and is meant for validation-sized problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import (
    ConfigurationError,
    FactorizationError,
    ParameterError,
    QuadratureError,
)
from .geometry import GridGeometry, ParamFields, SpatialField
from .kernels import MaternParams, matern_covariance
from .rng import STAGE_LOCAL_SIM, STAGE_ORACLE, stream

__all__ = [
    "QuadratureGrid",
    "convolution_covariance",
    "convolution_correlation",
    "testcase_theta",
    "TESTCASE_DOMAIN",
    "dense_simulate",
    "local_simulate",
]

TESTCASE_DOMAIN = (-24.0, 24.0, -24.0, 24.0)

_DENSE_LIMIT = 5000


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint-rule settings for the convolution integral.

    ``spacing`` and ``padding`` default to min(theta)/spacing_divisor
    and padding_multiple*max(theta) for the pair being integrated.  The
    kernel mass escaping the padded grid is bounded analytically per
    point and must stay below ``mass_tol``.
    """

    spacing: float | None = None
    padding: float | None = None
    spacing_divisor: float = 8.0
    padding_multiple: float = 8.0
    mass_tol: float = 1e-5

    def __post_init__(self):
        if self.spacing is not None and not self.spacing > 0:
            raise ParameterError("quadrature spacing must be positive")
        if self.padding is not None and not self.padding > 0:
            raise ParameterError("quadrature padding must be positive")
        if not (self.spacing_divisor > 0 and self.padding_multiple > 0):
            raise ParameterError("quadrature divisors must be positive")
        if not 0 < self.mass_tol < 1:
            raise ParameterError("mass tolerance must be in (0, 1)")

    def resolve(self, thetas) -> tuple[float, float]:
        th = np.asarray(thetas, dtype=float)
        h = self.spacing if self.spacing is not None else float(th.min()) / self.spacing_divisor
        pad = (
            self.padding
            if self.padding is not None
            else self.padding_multiple * float(th.max())
        )
        return h, pad


_PSI_CHECKED: dict[int, float] = {}


def _radial_mass(psi, lo: float, hi: float) -> float:
    val, _ = integrate.quad(
        lambda r: psi(r) ** 2 * 2.0 * math.pi * r, lo, hi, limit=200
    )
    return val


def _check_psi(psi):
    # Total squared mass must be 1; cache per kernel object.
    key = id(psi)
    if key not in _PSI_CHECKED:
        total = _radial_mass(psi, 0.0, np.inf)
        if abs(total - 1.0) > 1e-3:
            raise ParameterError(
                f"kernel is not normalized: integral of psi^2 is {total:.6f}"
            )
        _PSI_CHECKED[key] = total


def _tail_mass(psi, radius: float) -> float:
    if not np.isfinite(radius) or radius <= 0:
        return 1.0
    return _radial_mass(psi, radius, np.inf)


def _eval_field(field, pts: np.ndarray) -> np.ndarray:
    out = np.asarray(field(pts), dtype=float)
    return out.reshape(pts.shape[0])


def _pair_grid(pts: np.ndarray, h: float, pad: float):
    xlo, xhi = pts[:, 0].min() - pad, pts[:, 0].max() + pad
    ylo, yhi = pts[:, 1].min() - pad, pts[:, 1].max() + pad
    nx = int(np.ceil((xhi - xlo) / h))
    ny = int(np.ceil((yhi - ylo) / h))
    if nx * ny > 40_000_000:
        raise QuadratureError(
            f"quadrature grid would need {nx * ny} nodes; "
            "increase the spacing or reduce the padding"
        )
    ux = xlo + (np.arange(nx) + 0.5) * h
    uy = ylo + (np.arange(ny) + 0.5) * h
    return ux, uy


def _kernel_surface(psi, point: np.ndarray, theta: float, ux, uy) -> np.ndarray:
    d = np.hypot(ux[None, :] - point[0], uy[:, None] - point[1])
    return psi(d / theta) / theta


def _coverage_check(psi, pts: np.ndarray, thetas: np.ndarray, ux, uy, h, tol):
    # Distance from each point to the nearest grid edge bounds the escaped mass.
    xedge_lo, xedge_hi = ux[0] - 0.5 * h, ux[-1] + 0.5 * h
    yedge_lo, yedge_hi = uy[0] - 0.5 * h, uy[-1] + 0.5 * h
    for p, th in zip(pts, thetas):
        margin = min(p[0] - xedge_lo, xedge_hi - p[0], p[1] - yedge_lo, yedge_hi - p[1])
        escaped = _tail_mass(psi, margin / th)
        if escaped > tol:
            raise QuadratureError(
                f"kernel mass {escaped:.2e} escapes the quadrature grid at "
                f"{tuple(p)} (tolerance {tol:.1e}); increase the padding"
            )


def convolution_covariance(
    s,
    s_prime,
    theta_field,
    sigma_field,
    psi,
    quad: QuadratureGrid | None = None,
) -> float:
    """Convolution-process covariance between two locations.

    The range surface is evaluated only at the two endpoints, so a pair
    with equal theta values sees an exactly stationary integrand.
    """
    quad = quad if quad is not None else QuadratureGrid()
    _check_psi(psi)
    pts = np.vstack([np.asarray(s, float).reshape(2), np.asarray(s_prime, float).reshape(2)])
    thetas = _eval_field(theta_field, pts)
    if np.any(thetas <= 0):
        raise ParameterError("range surface must be positive at both endpoints")
    sigmas = _eval_field(sigma_field, pts)
    h, pad = quad.resolve(thetas)
    ux, uy = _pair_grid(pts, h, pad)
    _coverage_check(psi, pts, thetas, ux, uy, h, quad.mass_tol)
    h0 = _kernel_surface(psi, pts[0], thetas[0], ux, uy)
    h1 = _kernel_surface(psi, pts[1], thetas[1], ux, uy)
    return float(sigmas[0] * sigmas[1] * h * h * np.sum(h0 * h1))


def convolution_correlation(
    s,
    s_prime,
    theta_field,
    sigma_field,
    psi,
    quad: QuadratureGrid | None = None,
) -> float:
    """Convolution-process correlation, all three integrals on one grid."""
    quad = quad if quad is not None else QuadratureGrid()
    _check_psi(psi)
    pts = np.vstack([np.asarray(s, float).reshape(2), np.asarray(s_prime, float).reshape(2)])
    thetas = _eval_field(theta_field, pts)
    if np.any(thetas <= 0):
        raise ParameterError("range surface must be positive at both endpoints")
    h, pad = quad.resolve(thetas)
    ux, uy = _pair_grid(pts, h, pad)
    _coverage_check(psi, pts, thetas, ux, uy, h, quad.mass_tol)
    h0 = _kernel_surface(psi, pts[0], thetas[0], ux, uy)
    h1 = _kernel_surface(psi, pts[1], thetas[1], ux, uy)
    k01 = np.sum(h0 * h1)
    k00 = np.sum(h0 * h0)
    k11 = np.sum(h1 * h1)
    denom = math.sqrt(k00 * k11)
    if denom <= 0:
        raise QuadratureError("degenerate kernel mass on the quadrature grid")
    return float(k01 / denom)


def testcase_theta(case: int) -> ParamFields:
    """Range surfaces for the two standard validation cases.

    Case 1 is piecewise constant in the first coordinate: theta = 5 for
    s1 <= 0 and 1.9 beyond.  Case 2 interpolates linearly from 6 at
    s1 = -24 down to 1 at s1 = +24 (so theta(0) = 3.5).  Both carry
    unit marginal SD, no nugget and target smoothness 2 on the square
    ``TESTCASE_DOMAIN``.
    """
    if case == 1:
        theta = SpatialField.from_callable(
            lambda pts: np.where(pts[:, 0] <= 0.0, 5.0, 1.9), "piecewise"
        )
    elif case == 2:
        theta = SpatialField.from_callable(
            lambda pts: 3.5 - (5.0 / 48.0) * pts[:, 0], "linear"
        )
    else:
        raise ParameterError(f"unknown test case {case}; choose 1 or 2")
    return ParamFields(
        theta=theta,
        sigma=SpatialField.constant(1.0),
        tau=SpatialField.constant(0.0),
        nu=2.0,
    )


def dense_simulate(cov, n_realizations: int, seed: int, method: str = "auto") -> np.ndarray:
    """Exact Gaussian draws from a dense covariance matrix.

    Factors K = A^T A (Cholesky, or a symmetric eigenvalue root when K
    is only semidefinite) and returns A^T E for standard normal E.
    Intended for validation sizes; the quadratic memory cost is the
    point, not a problem to fix here.
    """
    if callable(cov):
        cov = cov()
    k = np.asarray(cov, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ParameterError(f"covariance must be square, got {k.shape}")
    n = k.shape[0]
    if n > _DENSE_LIMIT:
        raise ConfigurationError(
            f"dense simulation limited to {_DENSE_LIMIT} locations, got {n}"
        )
    if n_realizations < 0:
        raise ParameterError("n_realizations must be nonnegative")
    scale = float(np.abs(k).max()) if n else 0.0
    if n and float(np.abs(k - k.T).max()) > 1e-10 * max(scale, 1.0):
        raise ParameterError("covariance matrix is not symmetric")
    if method not in ("auto", "cholesky", "eigen"):
        raise ParameterError(f"unknown factorization method {method!r}")
    root = None
    if method in ("auto", "cholesky"):
        try:
            root = np.linalg.cholesky(k).T
        except np.linalg.LinAlgError:
            if method == "cholesky":
                raise FactorizationError(
                    "covariance is not positive definite; try method='eigen'"
                ) from None
    if root is None:
        w, v = np.linalg.eigh(k)
        if w.size and w.min() < -1e-8 * max(w.max(), 0.0) - 1e-12:
            raise FactorizationError(
                f"covariance is indefinite (min eigenvalue {w.min():.3e})"
            )
        root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    e = stream(seed, STAGE_ORACLE).standard_normal((n, n_realizations))
    return root.T @ e


def local_simulate(
    fields: ParamFields,
    geometry: GridGeometry,
    window: int = 11,
    seed: int = 0,
    rng=None,
) -> np.ndarray:
    """Windowed locally stationary simulation on a grid.

    Draws one standard normal per grid point, then gives each point the
    center row of the symmetric square root of the stationary covariance
    (at that point's parameters) over its window, dotted with the window's
    draws.  Neighboring windows reuse the same draws, which is what makes
    the field continuous; the marginal variance at every point is exactly
    sigma^2 + tau^2 by construction.
    """
    if window < 3 or window % 2 == 0:
        raise ConfigurationError(f"window must be an odd integer >= 3, got {window}")
    if window > min(geometry.nx, geometry.ny):
        raise ConfigurationError(
            f"window {window} exceeds the grid extent "
            f"({geometry.nx} x {geometry.ny})"
        )
    locs = geometry.locations()
    theta, sigma, tau = fields.at(locs)
    gen = rng if rng is not None else stream(seed, STAGE_LOCAL_SIM)
    noise = gen.standard_normal(geometry.n_points)
    hw = window // 2
    out = np.empty(geometry.n_points)
    # Center-row weights depend only on local params and window clipping,
    # so piecewise-constant surfaces hit the cache almost everywhere.
    cache: dict[tuple, np.ndarray] = {}
    for iy in range(geometry.ny):
        ylo, yhi = max(0, iy - hw), min(geometry.ny - 1, iy + hw)
        for ix in range(geometry.nx):
            xlo, xhi = max(0, ix - hw), min(geometry.nx - 1, ix + hw)
            i = iy * geometry.nx + ix
            key = (theta[i], sigma[i], tau[i], ix - xlo, xhi - ix, iy - ylo, yhi - iy)
            w = cache.get(key)
            if w is None:
                w = _center_weights(
                    geometry, theta[i], sigma[i], tau[i], fields.nu,
                    ix - xlo, xhi - ix, iy - ylo, yhi - iy,
                )
                cache[key] = w
            cols = (
                np.arange(ylo, yhi + 1)[:, None] * geometry.nx
                + np.arange(xlo, xhi + 1)[None, :]
            ).ravel()
            out[i] = w @ noise[cols]
    return out


def _center_weights(geometry, theta, sigma, tau, nu, left, right, below, above):
    ox = geometry.dx * np.arange(-left, right + 1)
    oy = geometry.dy * np.arange(-below, above + 1)
    px = np.tile(ox, oy.size)
    py = np.repeat(oy, ox.size)
    d = np.hypot(px[:, None] - px[None, :], py[:, None] - py[None, :])
    if sigma == 0.0 and tau == 0.0:
        return np.zeros(px.size)
    params = MaternParams(sigma=max(sigma, 1e-300), theta=theta, nu=nu, tau=tau)
    c = matern_covariance(d, params)
    vals, vecs = np.linalg.eigh(c)
    vals = np.clip(vals, 0.0, None)
    center = below * ox.size + left
    return vecs @ (np.sqrt(vals) * vecs[center])
