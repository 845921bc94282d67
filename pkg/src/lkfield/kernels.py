"""Closed-form kernels: the Matérn family and the Wendland C4 basis kernel.

The Matérn correlation used throughout is

    corr(d) = 2^(1-nu) / Gamma(nu) * (d/theta)^nu * K_nu(d/theta),

normalized so corr(0) = 1.  There is no sqrt(2 nu) factor inside the
argument; theta is the range parameter of ``psi(d) = C d^nu K_nu(d)``
directly, so nu = 1/2 gives exp(-d/theta) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ParameterError, UnsupportedTargetError

__all__ = [
    "MaternParams",
    "wendland_c4",
    "matern_correlation",
    "matern_covariance",
    "convolution_kernel_psi",
    "kernel_smoothness",
]


@dataclass(frozen=True)
class MaternParams:
    """Stationary Matérn parameters with an optional nugget.

    sigma and tau are standard deviations; the marginal variance of the
    observed process is sigma**2 + tau**2.
    """

    sigma: float
    theta: float
    nu: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not self.theta > 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not self.nu > 0:
            raise ParameterError(f"nu must be positive, got {self.nu}")
        if self.tau < 0:
            raise ParameterError(f"tau must be nonnegative, got {self.tau}")


def wendland_c4(d):
    """Wendland C4 kernel, compactly supported on [0, 1].

    phi(d) = (1 - d)^6 (35 d^2 + 18 d + 3) / 3 for 0 <= d <= 1, else 0.
    phi(0) = 1 and phi is C4 at the support boundary.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distances must be nonnegative")
    out = np.zeros(d.shape)
    inside = d <= 1.0
    t = d[inside]
    out[inside] = (1.0 - t) ** 6 * (35.0 * t * t + 18.0 * t + 3.0) / 3.0
    return out if out.ndim else float(out)


def matern_correlation(d, theta: float, nu: float):
    """Matérn correlation at distances ``d`` for range theta, smoothness nu.

    Values lie in [0, 1] with the d = 0 limit handled exactly; very
    large arguments underflow cleanly to 0.
    """
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distances must be nonnegative")
    x = d / theta
    out = np.ones(x.shape)
    pos = x > 0
    xp = x[pos]
    # K_nu underflows to 0 for large arguments, which is the correct limit;
    # the constant keeps corr(0+) -> 1.
    with np.errstate(over="ignore", invalid="ignore"):
        val = (2.0 ** (1.0 - nu) / special.gamma(nu)) * xp**nu * special.kv(nu, xp)
    out[pos] = np.clip(np.nan_to_num(val, nan=0.0), 0.0, 1.0)
    return out if out.ndim else float(out)


def matern_covariance(d, params: MaternParams):
    """Matérn covariance with nugget: sigma^2 corr(d) + tau^2 [d == 0]."""
    d = np.asarray(d, dtype=float)
    cov = params.sigma**2 * matern_correlation(d, params.theta, params.nu)
    if params.tau > 0:
        cov = cov + params.tau**2 * (d == 0)
    return cov if np.ndim(cov) else float(cov)


def kernel_smoothness(nu_target: float, dim: int = 2) -> float:
    """Smoothness of the convolution kernel implying a Matérn nu_target field.

    Convolving white noise with a Matérn(nu_k) shaped kernel in R^dim
    yields a Matérn field with nu_target = 2 nu_k + dim/2, so
    nu_k = nu_target/2 - dim/4.  Targets at or below dim/2 have no such
    kernel and are rejected.
    """
    if dim != 2:
        raise UnsupportedTargetError(f"only dim=2 is supported, got {dim}")
    nu_k = nu_target / 2.0 - dim / 4.0
    if not nu_k > 0:
        raise UnsupportedTargetError(
            f"target smoothness {nu_target} needs nu_target > {dim / 2.0} in dim {dim}"
        )
    return nu_k


_PSI_NORM_CACHE: dict[float, float] = {}


def _psi_normalization(nu_k: float) -> float:
    # c such that integral over R^2 of (c * matern_correlation(|u|, 1, nu_k))^2 du = 1.
    key = float(nu_k)
    if key not in _PSI_NORM_CACHE:
        if nu_k == 0.5:
            # integral of exp(-2r) 2 pi r dr = pi/2
            _PSI_NORM_CACHE[key] = math.sqrt(2.0 / math.pi)
        else:
            val, _ = integrate.quad(
                lambda r: matern_correlation(r, 1.0, nu_k) ** 2 * 2.0 * math.pi * r,
                0.0,
                np.inf,
                limit=200,
            )
            _PSI_NORM_CACHE[key] = 1.0 / math.sqrt(val)
    return _PSI_NORM_CACHE[key]


def convolution_kernel_psi(d, nu_target: float, dim: int = 2):
    """Normalized radial kernel whose self-convolution is Matérn nu_target.

    Returns psi(d) with unit-range Matérn(nu_k) shape, nu_k from
    :func:`kernel_smoothness`, scaled so the squared kernel integrates
    to one over the plane.  For nu_target = 2 this is
    sqrt(2/pi) exp(-d).
    """
    nu_k = kernel_smoothness(nu_target, dim)
    return _psi_normalization(nu_k) * matern_correlation(d, 1.0, nu_k)
