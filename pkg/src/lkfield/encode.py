"""Stationary calibration and nonstationary encoding.

Calibration finds, for one target Matérn range, the shared
autoregression center weight a and the per-level variance split that
make the lattice process correlation match the target correlation over
(0, 3 theta].  Encoding then turns per-box parameter estimates into a
lattice model by interpolating the fitted range to node points and
reading (a, weights) off the calibration table.

With a scalar center weight the level matrix is B = a I - A, where A is
the node-grid adjacency, so Q^{-1} = (a I - A)^{-2} diagonalizes in the
2-D discrete sine basis.  The calibration objective exploits that: the
basis is transformed once per level and every candidate (a, weights)
costs only an elementwise reweighting, no factorization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import optimize

from .errors import CalibrationError, EncodingError, ParameterError
from .geometry import SpatialField
from .kernels import matern_correlation
from .lattice import MultiresLattice, basis_matrix, build_lattice
from .local_fit import LocalEstimates
from .lkmodel import LKModel

__all__ = [
    "LKConfig",
    "CalibrationTable",
    "calibrate_stationary",
    "build_calibration_table",
    "encode_nonstationary",
]


@dataclass(frozen=True)
class LKConfig:
    """Lattice layout shared by calibration and encoding."""

    n_levels: int = 3
    coarse_spacing: float = 2.5
    delta: float = 2.5
    buffer: int = 3

    def __post_init__(self):
        if self.n_levels < 1:
            raise ParameterError(f"need at least one level, got {self.n_levels}")
        if not self.coarse_spacing > 0:
            raise ParameterError("coarse spacing must be positive")
        if not self.delta > 1:
            raise ParameterError(f"overlap delta must exceed 1, got {self.delta}")
        if self.buffer < 0:
            raise ParameterError("buffer must be nonnegative")


def _sine_eigenvalues(n: int) -> np.ndarray:
    # Path-graph adjacency eigenvalues, largest below 2.
    return 2.0 * np.cos(np.pi * (np.arange(n) + 1.0) / (n + 1.0))


class _CurveEngine:
    """Stationary lattice correlations against one Matérn target.

    Evaluation points sit on two rays (axis and diagonal) from a center
    at distances covering (0, 3 theta].  Per level the unnormalized
    basis rows are moved into the sine eigenbasis of the node-grid
    adjacency once; correlations for any (a, weights) then follow from
    diagonal reweighting.
    """

    def __init__(self, theta: float, nu: float, config: LKConfig, n_dist: int = 40):
        if not theta > 0:
            raise ParameterError(f"theta must be positive, got {theta}")
        if not nu > 0:
            raise ParameterError(f"nu must be positive, got {nu}")
        if n_dist < 4:
            raise ParameterError("need at least 4 distances for a meaningful fit")
        half = 3.0 * theta + 2.0 * config.coarse_spacing
        self.lattice = build_lattice(
            (-half, half, -half, half),
            config.coarse_spacing,
            config.n_levels,
            config.delta,
            config.buffer,
        )
        dists = 3.0 * theta * np.arange(1, n_dist + 1) / n_dist
        rays = np.array([[1.0, 0.0], [math.sqrt(0.5), math.sqrt(0.5)]])
        pts = [np.zeros(2)]
        for ray in rays:
            pts.extend(d * ray for d in dists)
        self.points = np.vstack(pts)
        self.distances = np.hypot(self.points[1:, 0], self.points[1:, 1])
        self.target = matern_correlation(self.distances, theta, nu)
        basis = basis_matrix(self.points, self.lattice)
        self._spectral = []
        for lv, phi in zip(self.lattice.levels, basis.matrices):
            dense = phi.toarray().reshape(self.points.shape[0], lv.ny, lv.nx)
            p = scipy.fft.dstn(dense, type=1, axes=(1, 2), norm="ortho")
            p = p.reshape(self.points.shape[0], lv.n_nodes)
            mu = (
                _sine_eigenvalues(lv.ny)[:, None] + _sine_eigenvalues(lv.nx)[None, :]
            ).ravel()
            self._spectral.append((p, mu))

    def correlations(self, a: float, weights) -> np.ndarray:
        """Lattice correlation to the center at each evaluation distance."""
        if not a > 4.0:
            raise ParameterError(f"center weight must exceed 4, got {a}")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self._spectral),) or np.any(w < 0):
            raise ParameterError("need one nonnegative weight per level")
        total = w.sum()
        if not total > 0:
            raise ParameterError("weights must not all vanish")
        w = w / total
        corr = np.zeros(self.points.shape[0] - 1)
        for (p, mu), alpha in zip(self._spectral, w):
            if alpha == 0.0:
                continue
            gain = 1.0 / (a - mu) ** 2
            var = (p * p) @ gain
            cov0 = p[1:] @ (p[0] * gain)
            corr += alpha * cov0 / np.sqrt(var[0] * var[1:])
        return corr

    def rel_rmse(self, a: float, weights) -> float:
        diff = self.correlations(a, weights) - self.target
        return float(np.linalg.norm(diff) / np.linalg.norm(self.target))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


# Center weights are searched as log(a - 4); the upper cap stops the
# optimizer from walking into the white-coefficient plateau (a ~ 1e13)
# where fits are degenerate and table interpolation turns meaningless.
_LOG_A_RANGE = (-30.0, 7.0)


def _unpack(x: np.ndarray, n_levels: int) -> tuple[float, np.ndarray]:
    a = 4.0 + math.exp(min(max(x[0], _LOG_A_RANGE[0]), _LOG_A_RANGE[1]))
    logits = np.concatenate([[0.0], x[1:]]) if n_levels > 1 else np.zeros(1)
    return a, _softmax(logits)


def calibrate_stationary(
    theta: float,
    nu: float,
    config: LKConfig,
    n_dist: int = 40,
    error_ceiling: float = 0.10,
) -> tuple[float, np.ndarray, float]:
    """Match the stationary lattice correlation to a Matérn target.

    Returns (a, per-level variance weights, achieved relative RMSE of
    the correlation curve over (0, 3 theta] along two rays).  Ranges
    far outside what the lattice can represent surface as a ceiling
    violation rather than silently poor output.
    """
    engine = _CurveEngine(theta, nu, config, n_dist=n_dist)
    n_lev = config.n_levels

    def objective(x):
        a, alpha = _unpack(np.asarray(x, dtype=float), n_lev)
        return engine.rel_rmse(a, alpha)

    h1 = config.coarse_spacing
    geo = -np.log(2.0) * nu * np.arange(1, n_lev)
    starts = [
        np.concatenate([[2.0 * math.log(h1 / theta)], geo]),
        np.concatenate([[2.0 * math.log(h1 / (2.0 * theta))], np.zeros(n_lev - 1)]),
        np.concatenate([[2.0 * math.log(h1 / theta) + math.log(0.25)], -1.5 * np.arange(1, n_lev)]),
    ]
    best_x, best_f = None, np.inf
    for x0 in starts:
        x0 = np.clip(x0, _LOG_A_RANGE[0], _LOG_A_RANGE[1])
        res = optimize.minimize(
            objective,
            x0=x0,
            method="Nelder-Mead",
            options={"xatol": 1e-4, "fatol": 1e-9, "maxiter": 600, "maxfev": 1200},
        )
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    a, alpha = _unpack(np.asarray(best_x, dtype=float), n_lev)
    if not np.isfinite(best_f) or best_f > error_ceiling:
        raise CalibrationError(
            f"calibration for theta={theta} reached relative error {best_f:.4f}, "
            f"above the ceiling {error_ceiling}; the lattice configuration cannot "
            f"represent this range"
        )
    return a, alpha, best_f


@dataclass(frozen=True)
class CalibrationTable:
    """Range-to-lattice lookup produced by repeated stationary calibration.

    Valid only for the (nu, levels, delta, spacing, buffer) it was built
    with; those are recorded and checked at encoding time.  ``lookup``
    interpolates linearly in theta and clamps outside the grid.
    """

    theta: np.ndarray
    a: np.ndarray
    weights: np.ndarray
    rmse: np.ndarray
    nu: float
    n_levels: int
    coarse_spacing: float
    delta: float
    buffer: int

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if th.ndim != 1 or th.size == 0:
            raise ParameterError("table needs at least one theta entry")
        if np.any(np.diff(th) <= 0):
            raise ParameterError("table theta grid must be strictly increasing")
        if np.asarray(self.a).shape != th.shape:
            raise ParameterError("table a column must match the theta grid")
        if np.asarray(self.weights).shape != (th.size, self.n_levels):
            raise ParameterError("table weights must be (n_theta, n_levels)")
        if np.any(np.asarray(self.a) <= 4.0):
            raise ParameterError("table center weights must exceed 4")

    @property
    def config(self) -> LKConfig:
        return LKConfig(
            n_levels=self.n_levels,
            coarse_spacing=self.coarse_spacing,
            delta=self.delta,
            buffer=self.buffer,
        )

    def lookup(self, theta_values) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated (a, weights) at the given ranges, clamped to the grid.

        Interpolation is linear in theta; the center weight is carried
        as log(a - 4) because a spans orders of magnitude, so no lookup
        can ever dip to the stability boundary.
        """
        tv = np.asarray(theta_values, dtype=float)
        flat = tv.reshape(-1)
        if np.any(~np.isfinite(flat)):
            raise ParameterError("range values must be finite")
        # interpolated range surfaces can overshoot the grid ends by a
        # few ulps; only genuine extrapolation is worth a warning
        fuzz = 1e-9 * (self.theta[-1] - self.theta[0] + 1.0)
        n_out = int(
            np.sum((flat < self.theta[0] - fuzz) | (flat > self.theta[-1] + fuzz))
        )
        if n_out:
            warnings.warn(
                f"{n_out} range value(s) outside the calibration grid "
                f"[{self.theta[0]}, {self.theta[-1]}]; clamped",
                RuntimeWarning,
                stacklevel=2,
            )
        a = 4.0 + np.exp(np.interp(flat, self.theta, np.log(self.a - 4.0)))
        w = np.column_stack(
            [np.interp(flat, self.theta, self.weights[:, l]) for l in range(self.n_levels)]
        )
        w = w / w.sum(axis=1, keepdims=True)
        return a.reshape(tv.shape), w.reshape(tv.shape + (self.n_levels,))


def build_calibration_table(
    theta_grid,
    nu: float,
    config: LKConfig,
    n_dist: int = 40,
    error_ceiling: float = 0.10,
) -> CalibrationTable:
    """Calibrate every range on a grid and collect the results."""
    th = np.asarray(theta_grid, dtype=float)
    if th.ndim != 1 or th.size == 0:
        raise ParameterError("theta grid must be a nonempty 1-D array")
    if np.any(th <= 0):
        raise ParameterError("theta grid must be positive")
    if np.any(np.diff(th) <= 0):
        raise ParameterError("theta grid must be strictly increasing")
    rows_a = np.empty(th.size)
    rows_w = np.empty((th.size, config.n_levels))
    rows_e = np.empty(th.size)
    for i, theta in enumerate(th):
        a, w, e = calibrate_stationary(
            float(theta), nu, config, n_dist=n_dist, error_ceiling=error_ceiling
        )
        rows_a[i], rows_w[i], rows_e[i] = a, w, e
    return CalibrationTable(
        theta=th.copy(),
        a=rows_a,
        weights=rows_w,
        rmse=rows_e,
        nu=float(nu),
        n_levels=config.n_levels,
        coarse_spacing=config.coarse_spacing,
        delta=config.delta,
        buffer=config.buffer,
    )


def encode_nonstationary(
    estimates: LocalEstimates,
    table: CalibrationTable,
    domain=None,
) -> LKModel:
    """Turn per-box estimates into a nonstationary lattice model.

    The fitted range surface is interpolated bilinearly to every node
    of every level and mapped through the table to per-node center
    weights; the fitted SD is split across levels by the table's
    variance weights at the local range.  The lattice covers the data
    extent unless a wider ``domain`` is given.
    """
    if estimates.nu != table.nu:
        raise EncodingError(
            f"estimates were fitted with nu={estimates.nu} but the table was "
            f"calibrated for nu={table.nu}"
        )
    bad = ~(
        np.isfinite(estimates.theta)
        & np.isfinite(estimates.sigma)
        & np.isfinite(estimates.tau)
    )
    if np.any(bad):
        boxes = np.flatnonzero(bad)
        shown = ", ".join(str(b) for b in boxes[:10])
        more = "" if boxes.size <= 10 else f" (+{boxes.size - 10} more)"
        raise EncodingError(
            f"estimates are missing (NaN) in {boxes.size} box(es): {shown}{more}; "
            "filter or refit degenerate windows before encoding"
        )
    if np.any(estimates.theta <= 0):
        raise EncodingError("fitted ranges must be positive to encode")
    geom = estimates.geometry
    if domain is None:
        domain = geom.extent()
    lattice = build_lattice(
        domain,
        table.coarse_spacing,
        table.n_levels,
        table.delta,
        table.buffer,
    )
    theta_field = SpatialField.from_grid(geom, estimates.theta)
    a_fields = []
    for level in lattice.levels:
        a_nodes, _ = table.lookup(theta_field(level.nodes()))
        a_fields.append(a_nodes)
    _, w_grid = table.lookup(estimates.theta)
    sigma_fields = [
        SpatialField.from_grid(geom, estimates.sigma * np.sqrt(w_grid[:, l]))
        for l in range(table.n_levels)
    ]
    tau_field = SpatialField.from_grid(geom, estimates.tau)
    return LKModel(lattice, a_fields, sigma_fields, tau_field)
