"""Observation grids, scalar parameter surfaces and replicate data.

Grid locations are always ordered row-major with x varying fastest
(``index = iy * nx + ix``); every array in the package that is indexed
by grid box follows this ordering, and the file formats serialize it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ParameterError

__all__ = ["GridGeometry", "SpatialField", "ReplicateField", "ParamFields"]


@dataclass(frozen=True)
class GridGeometry:
    """Rectangular grid of observation locations."""

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("grid needs at least one point per axis")
        if not (self.dx > 0 and self.dy > 0):
            raise ConfigurationError("grid spacing must be positive")

    @property
    def n_points(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) spanned by the grid points."""
        return (
            self.x0,
            self.x0 + self.dx * (self.nx - 1),
            self.y0,
            self.y0 + self.dy * (self.ny - 1),
        )

    def locations(self) -> np.ndarray:
        """All grid locations, shape (nx*ny, 2), x varying fastest."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    @classmethod
    def from_extent(
        cls, xmin: float, xmax: float, ymin: float, ymax: float, nx: int, ny: int
    ) -> "GridGeometry":
        if nx < 2 or ny < 2:
            raise ConfigurationError("extent grids need at least two points per axis")
        return cls(
            x0=float(xmin),
            y0=float(ymin),
            dx=(xmax - xmin) / (nx - 1),
            dy=(ymax - ymin) / (ny - 1),
            nx=nx,
            ny=ny,
        )


def _axis_cell(frac: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # Cell index and in-cell weight for one axis, clamped to the grid.
    if n == 1:
        return np.zeros(frac.shape, dtype=np.intp), np.zeros_like(frac)
    f = np.clip(frac, 0.0, n - 1.0)
    i = np.minimum(f.astype(np.intp), n - 2)
    return i, f - i


class SpatialField:
    """Scalar field over the plane: constant, gridded table or callable.

    Gridded fields interpolate bilinearly and clamp to the edge value
    outside the grid, so lattice nodes in the buffer rings see a
    continued surface rather than an extrapolation.  Calling the field
    with an (n, 2) array of locations returns an (n,) array.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], kind: str):
        self._fn = fn
        self.kind = kind

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[np.newaxis, :]
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ParameterError("locations must have shape (n, 2)")
        out = np.asarray(self._fn(pts), dtype=float)
        if out.shape != (pts.shape[0],):
            raise ParameterError("field evaluator returned a wrong-shaped array")
        return out

    def __repr__(self):
        return f"SpatialField(kind={self.kind!r})"

    @classmethod
    def constant(cls, value: float) -> "SpatialField":
        v = float(value)
        field = cls(lambda pts: np.full(pts.shape[0], v), "constant")
        field.value = v
        return field

    @classmethod
    def from_callable(cls, fn, kind: str = "callable") -> "SpatialField":
        return cls(lambda pts: np.asarray(fn(pts), dtype=float).reshape(pts.shape[0]), kind)

    @classmethod
    def from_grid(cls, geometry: GridGeometry, values) -> "SpatialField":
        vals = np.asarray(values, dtype=float)
        if vals.size != geometry.n_points:
            raise ParameterError(
                f"grid field needs {geometry.n_points} values, got {vals.size}"
            )
        table = vals.reshape(geometry.ny, geometry.nx)

        def interp(pts: np.ndarray) -> np.ndarray:
            fx = (pts[:, 0] - geometry.x0) / geometry.dx
            fy = (pts[:, 1] - geometry.y0) / geometry.dy
            ix, wx = _axis_cell(fx, geometry.nx)
            iy, wy = _axis_cell(fy, geometry.ny)
            ix1 = np.minimum(ix + 1, geometry.nx - 1)
            iy1 = np.minimum(iy + 1, geometry.ny - 1)
            return (
                table[iy, ix] * (1 - wx) * (1 - wy)
                + table[iy, ix1] * wx * (1 - wy)
                + table[iy1, ix] * (1 - wx) * wy
                + table[iy1, ix1] * wx * wy
            )

        field = cls(interp, "grid")
        field.geometry = geometry
        field.values = vals.reshape(-1).copy()
        return field


@dataclass(frozen=True)
class ParamFields:
    """Matérn parameter surfaces: range, marginal SD, nugget SD.

    ``nu`` is the smoothness of the target family and is held fixed
    across space.
    """

    theta: SpatialField
    sigma: SpatialField
    tau: SpatialField
    nu: float = 2.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ParameterError(f"smoothness must be positive, got {self.nu}")

    def at(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evaluate (theta, sigma, tau) at the given locations."""
        pts = np.asarray(points, dtype=float)
        th = self.theta(pts)
        if np.any(th <= 0):
            raise ParameterError("range surface must be positive everywhere")
        sg = self.sigma(pts)
        if np.any(sg < 0):
            raise ParameterError("marginal SD surface must be nonnegative")
        ta = self.tau(pts)
        if np.any(ta < 0):
            raise ParameterError("nugget SD surface must be nonnegative")
        return th, sg, ta


class ReplicateField:
    """Complete replicated observations on a grid.

    ``values`` has shape (n_points, n_replicates) in grid ordering.  An
    optional covariate matrix (n_points, p) rides along for the window
    likelihood's fixed effects.
    """

    def __init__(self, geometry: GridGeometry, values, covariates=None):
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, np.newaxis]
        if vals.ndim != 2 or vals.shape[0] != geometry.n_points:
            raise ConfigurationError(
                f"values must have shape ({geometry.n_points}, M), got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("replicate values must be finite (no gaps)")
        self.geometry = geometry
        self.values = vals
        if covariates is not None:
            cov = np.asarray(covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, np.newaxis]
            if cov.shape[0] != geometry.n_points or cov.ndim != 2:
                raise ConfigurationError("covariates must have shape (n_points, p)")
            if not np.all(np.isfinite(cov)):
                raise ConfigurationError("covariates must be finite")
            self.covariates = cov
        else:
            self.covariates = None

    @property
    def n_replicates(self) -> int:
        return self.values.shape[1]

    def window(self, ix_lo: int, ix_hi: int, iy_lo: int, iy_hi: int) -> "ReplicateField":
        """Subgrid [ix_lo, ix_hi] x [iy_lo, iy_hi] (inclusive) as a new field."""
        g = self.geometry
        if not (0 <= ix_lo <= ix_hi < g.nx and 0 <= iy_lo <= iy_hi < g.ny):
            raise ConfigurationError("window indices outside the grid")
        sub = GridGeometry(
            x0=g.x0 + ix_lo * g.dx,
            y0=g.y0 + iy_lo * g.dy,
            dx=g.dx,
            dy=g.dy,
            nx=ix_hi - ix_lo + 1,
            ny=iy_hi - iy_lo + 1,
        )
        iy, ix = np.meshgrid(
            np.arange(iy_lo, iy_hi + 1), np.arange(ix_lo, ix_hi + 1), indexing="ij"
        )
        rows = (iy * g.nx + ix).ravel()
        cov = self.covariates[rows] if self.covariates is not None else None
        return ReplicateField(sub, self.values[rows], covariates=cov)
