"""Multiresolution lattice and compactly supported basis functions.

Each level carries a regular node grid anchored at the domain corner;
spacing halves from one level to the next and every level keeps a ring
of buffer nodes outside the domain so edge locations are surrounded by
basis functions.  Basis values are Wendland C4 in the distance to the
node measured in units of ``delta * spacing(level)``, so the overlap
between neighboring functions is the same at every level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, CoverageError, ParameterError
from .kernels import wendland_c4

__all__ = [
    "LatticeLevel",
    "MultiresLattice",
    "BasisMatrix",
    "build_lattice",
    "basis_matrix",
    "normalize_basis",
]


@dataclass(frozen=True)
class LatticeLevel:
    """One resolution level: a regular node grid with uniform spacing."""

    x: np.ndarray
    y: np.ndarray
    spacing: float

    @property
    def nx(self) -> int:
        return self.x.size

    @property
    def ny(self) -> int:
        return self.y.size

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def nodes(self) -> np.ndarray:
        """Node locations, shape (n_nodes, 2), x varying fastest."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class MultiresLattice:
    """Nested node grids over a rectangular domain."""

    domain: tuple[float, float, float, float]
    coarse_spacing: float
    delta: float
    buffer: int
    levels: tuple[LatticeLevel, ...]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_nodes(self) -> int:
        return sum(lv.n_nodes for lv in self.levels)


def _axis_nodes(lo: float, hi: float, h: float, buffer: int) -> np.ndarray:
    # Interior nodes anchored at lo, extended to cover hi, plus buffer rings.
    n_steps = int(np.ceil((hi - lo) / h - 1e-9))
    return lo + h * np.arange(-buffer, n_steps + buffer + 1)


def build_lattice(
    domain,
    coarse_spacing: float,
    n_levels: int,
    delta: float,
    buffer: int = 3,
) -> MultiresLattice:
    """Build the nested node grids for a rectangular domain.

    ``domain`` is (xmin, xmax, ymin, ymax).  Level l >= 1 has spacing
    ``coarse_spacing / 2**(l-1)`` and ``buffer`` rings of nodes outside
    the domain on each side, so buffers shrink proportionally at finer
    levels.
    """
    xmin, xmax, ymin, ymax = (float(v) for v in domain)
    if not (xmax > xmin and ymax > ymin):
        raise ConfigurationError("domain must have positive extent")
    if not coarse_spacing > 0:
        raise ParameterError(f"coarse spacing must be positive, got {coarse_spacing}")
    if n_levels < 1:
        raise ParameterError(f"need at least one level, got {n_levels}")
    if not delta > 1:
        raise ParameterError(f"overlap delta must exceed 1, got {delta}")
    if buffer < 0:
        raise ParameterError(f"buffer must be nonnegative, got {buffer}")
    if (xmax - xmin) < coarse_spacing or (ymax - ymin) < coarse_spacing:
        raise ConfigurationError(
            "domain smaller than one coarse spacing; shrink the spacing"
        )
    levels = []
    for lev in range(n_levels):
        h = coarse_spacing / 2**lev
        levels.append(
            LatticeLevel(
                x=_axis_nodes(xmin, xmax, h, buffer),
                y=_axis_nodes(ymin, ymax, h, buffer),
                spacing=h,
            )
        )
    return MultiresLattice(
        domain=(xmin, xmax, ymin, ymax),
        coarse_spacing=float(coarse_spacing),
        delta=float(delta),
        buffer=int(buffer),
        levels=tuple(levels),
    )


@dataclass(frozen=True)
class BasisMatrix:
    """Per-level basis evaluations at a fixed set of locations.

    ``matrices[l]`` is CSR with shape (n_locations, n_nodes(l)).  Rows
    of an unnormalized matrix hold raw Wendland values; after
    :func:`normalize_basis` each row is scaled so the level-l process
    has the requested marginal SD at that location.
    """

    locations: np.ndarray
    lattice: MultiresLattice
    matrices: tuple[sp.csr_matrix, ...]
    normalized: bool = False


def _level_basis(locations: np.ndarray, level: LatticeLevel, delta: float) -> sp.csr_matrix:
    h = level.spacing
    radius = delta * h
    n_loc = locations.shape[0]
    m = int(np.ceil(delta))
    offsets = np.arange(-m + 1, m + 1)
    # Cell index of each location along each node axis.
    bx = np.floor((locations[:, 0] - level.x[0]) / h).astype(np.intp)
    by = np.floor((locations[:, 1] - level.y[0]) / h).astype(np.intp)
    jx = bx[:, None] + offsets[None, :]
    jy = by[:, None] + offsets[None, :]
    okx = (jx >= 0) & (jx < level.nx)
    oky = (jy >= 0) & (jy < level.ny)
    dx = locations[:, 0][:, None] - (level.x[0] + h * jx)
    dy = locations[:, 1][:, None] - (level.y[0] + h * jy)
    # Combine the two axes; distances in units of the support radius.
    d2 = dx[:, :, None] ** 2 + dy[:, None, :] ** 2
    ok = okx[:, :, None] & oky[:, None, :]
    d = np.sqrt(d2, out=d2) / radius
    keep = ok & (d < 1.0)
    rows = np.broadcast_to(
        np.arange(n_loc, dtype=np.intp)[:, None, None], keep.shape
    )[keep]
    cols = (
        np.broadcast_to(jy[:, None, :], keep.shape)[keep] * level.nx
        + np.broadcast_to(jx[:, :, None], keep.shape)[keep]
    )
    vals = wendland_c4(d[keep])
    mat = sp.coo_matrix(
        (np.atleast_1d(vals), (rows, cols)), shape=(n_loc, level.n_nodes)
    )
    return mat.tocsr()


def basis_matrix(locations, lattice: MultiresLattice) -> BasisMatrix:
    """Evaluate the unnormalized basis at the given locations.

    Locations must lie inside the lattice domain (buffer nodes exist to
    serve them, not to extend the domain).  Each row has at most
    ``ceil(2 delta + 1)**2`` nonzeros per level.
    """
    pts = np.asarray(locations, dtype=float)
    if pts.ndim == 1:
        pts = pts[np.newaxis, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ParameterError("locations must have shape (n, 2)")
    if pts.shape[0] == 0:
        raise ParameterError("need at least one location")
    xmin, xmax, ymin, ymax = lattice.domain
    tol = 1e-9 * max(xmax - xmin, ymax - ymin)
    outside = (
        (pts[:, 0] < xmin - tol)
        | (pts[:, 0] > xmax + tol)
        | (pts[:, 1] < ymin - tol)
        | (pts[:, 1] > ymax + tol)
    )
    if np.any(outside):
        bad = int(np.argmax(outside))
        raise CoverageError(
            f"location {bad} at {tuple(pts[bad])} is outside the lattice domain "
            f"{lattice.domain}"
        )
    mats = tuple(_level_basis(pts, lv, lattice.delta) for lv in lattice.levels)
    return BasisMatrix(locations=pts, lattice=lattice, matrices=mats, normalized=False)


def _as_solver(precision):
    from .sar import SparseCholesky

    if isinstance(precision, SparseCholesky):
        return precision
    return SparseCholesky(precision)


def normalize_basis(basis: BasisMatrix, precisions, sigma_levels) -> BasisMatrix:
    """Rescale basis rows so each level has exact marginal variance.

    With unnormalized row phi* at location s, the level-l process value
    phi*^T c has variance w(s)^2 = phi*^T Q_l^{-1} phi*.  The normalized
    row is sigma_l(s) * phi* / w(s), so Var(g_l(s)) = sigma_l(s)^2
    exactly.  Applying the function twice with the same inputs is a
    no-op on the result.

    ``precisions`` holds one SPD precision matrix (or its factorization)
    per level; ``sigma_levels`` one scalar or per-location array per
    level.  A location with no basis support at some level is an error
    unless its requested SD is zero there.
    """
    n_levels = len(basis.matrices)
    if len(precisions) != n_levels or len(sigma_levels) != n_levels:
        raise ParameterError("need one precision and one sigma per level")
    n_loc = basis.locations.shape[0]
    chunk = 512
    out = []
    for lev_i, (phi, prec, sig) in enumerate(zip(basis.matrices, precisions, sigma_levels)):
        solver = _as_solver(prec)
        if solver.shape[0] != phi.shape[1]:
            raise ParameterError(
                f"level {lev_i + 1} precision has order {solver.shape[0]}, "
                f"basis has {phi.shape[1]} nodes"
            )
        sigma = np.broadcast_to(np.asarray(sig, dtype=float), (n_loc,))
        if np.any(sigma < 0):
            raise ParameterError("sigma must be nonnegative")
        w2 = np.empty(n_loc)
        for lo in range(0, n_loc, chunk):
            hi = min(lo + chunk, n_loc)
            block = phi[lo:hi]
            x = solver.solve(block.T.toarray())
            w2[lo:hi] = np.asarray(block.multiply(x.T).sum(axis=1)).ravel()
        w = np.sqrt(np.maximum(w2, 0.0))
        uncovered = (w == 0) & (sigma > 0)
        if np.any(uncovered):
            bad = int(np.argmax(uncovered))
            raise CoverageError(
                f"location {bad} at {tuple(basis.locations[bad])} has no basis "
                f"support at level {lev_i + 1}"
            )
        scale = np.divide(sigma, w, out=np.zeros(n_loc), where=w > 0)
        out.append(sp.diags(scale).dot(phi).tocsr())
    return BasisMatrix(
        locations=basis.locations,
        lattice=basis.lattice,
        matrices=tuple(out),
        normalized=True,
    )
