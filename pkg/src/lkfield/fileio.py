"""File formats: replicate text, parameter surfaces, binary grids,
calibration tables, model descriptors, manifests.

Text floats are written with ``repr``, which round-trips float64
exactly, so read(write(x)) is byte-identical as long as the grid
coordinates regenerate bitwise from (origin, spacing); readers verify
that and reject files that are not regular row-major grids.  The binary
grid format is a fixed little-endian header followed by float64 data.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .encode import CalibrationTable
from .errors import ConfigurationError, IOFormatError
from .geometry import GridGeometry, ReplicateField, SpatialField
from .lattice import build_lattice
from .lkmodel import LKModel
from .local_fit import LocalEstimates

__all__ = [
    "write_replicates",
    "read_replicates",
    "write_params",
    "read_params",
    "write_grid_binary",
    "read_grid_binary",
    "write_calibration_table",
    "read_calibration_table",
    "save_model",
    "load_model",
    "write_csv",
    "write_json",
    "read_json",
]

_MAGIC = b"LKGRID1\x00"

_PARAM_COLUMNS = (
    "theta",
    "sigma",
    "tau",
    "loglik",
    "sigma_obs",
    "converged",
    "degenerate",
    "window_ix",
    "window_iy",
)


def _fmt(x) -> str:
    return repr(float(x))


def _geometry_from_columns(x: np.ndarray, y: np.ndarray, path) -> GridGeometry:
    ux, uy = np.unique(x), np.unique(y)
    nx, ny = ux.size, uy.size
    if nx < 2 or ny < 2:
        raise IOFormatError(f"{path}: grid needs at least 2 distinct values per axis")
    if nx * ny != x.size:
        raise IOFormatError(
            f"{path}: {x.size} rows cannot form a complete {nx} x {ny} grid"
        )

    def spacing(u: np.ndarray) -> float:
        # Prefer a spacing that regenerates the axis bitwise.
        for cand in (u[1] - u[0], (u[-1] - u[0]) / (u.size - 1)):
            if np.array_equal(u[0] + cand * np.arange(u.size), u):
                return float(cand)
        cand = (u[-1] - u[0]) / (u.size - 1)
        if np.allclose(u[0] + cand * np.arange(u.size), u, rtol=0, atol=1e-9 * abs(cand)):
            return float(cand)
        raise IOFormatError(f"{path}: coordinates are not a regular grid")

    geom = GridGeometry(
        x0=float(ux[0]), y0=float(uy[0]),
        dx=spacing(ux), dy=spacing(uy), nx=nx, ny=ny,
    )
    locs = geom.locations()
    if not (np.array_equal(locs[:, 0], x) and np.array_equal(locs[:, 1], y)):
        if not np.allclose(locs, np.column_stack([x, y]), rtol=0, atol=1e-9):
            raise IOFormatError(
                f"{path}: rows are not in row-major order with x varying fastest"
            )
    return geom


def write_replicates(path, field: ReplicateField):
    """Delimited text: header lon,lat,rep_1..rep_M, one row per location."""
    locs = field.geometry.locations()
    m = field.n_replicates
    header = "lon,lat," + ",".join(f"rep_{j + 1}" for j in range(m))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(locs.shape[0]):
            row = [_fmt(locs[i, 0]), _fmt(locs[i, 1])]
            row.extend(_fmt(v) for v in field.values[i])
            fh.write(",".join(row) + "\n")


def read_replicates(path) -> ReplicateField:
    with open(path) as fh:
        header = fh.readline().strip()
    cols = [c.strip() for c in header.split(",")]
    if len(cols) < 3 or cols[0] != "lon" or cols[1] != "lat":
        raise IOFormatError(f"{path}: expected header lon,lat,rep_1..rep_M")
    expected = [f"rep_{j + 1}" for j in range(len(cols) - 2)]
    if cols[2:] != expected:
        raise IOFormatError(f"{path}: replicate columns must be rep_1..rep_M in order")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise IOFormatError(f"{path}: {exc}") from None
    if data.shape[1] != len(cols):
        raise IOFormatError(
            f"{path}: rows have {data.shape[1]} fields, header promises {len(cols)}"
        )
    geom = _geometry_from_columns(data[:, 0], data[:, 1], path)
    return ReplicateField(geom, data[:, 2:])


def write_params(path, est: LocalEstimates):
    """Parameter-surface text file; timing metadata stays in manifests."""
    locs = est.geometry.locations()
    with open(path, "w") as fh:
        fh.write(f"# nu={_fmt(est.nu)}\n")
        fh.write("lon,lat," + ",".join(_PARAM_COLUMNS) + "\n")
        for i in range(locs.shape[0]):
            fh.write(
                ",".join(
                    [
                        _fmt(locs[i, 0]),
                        _fmt(locs[i, 1]),
                        _fmt(est.theta[i]),
                        _fmt(est.sigma[i]),
                        _fmt(est.tau[i]),
                        _fmt(est.loglik[i]),
                        _fmt(est.sigma_obs[i]),
                        str(int(est.converged[i])),
                        str(int(est.degenerate[i])),
                        str(int(est.window_ix[i])),
                        str(int(est.window_iy[i])),
                    ]
                )
                + "\n"
            )


def read_params(path) -> LocalEstimates:
    nu = None
    header = None
    n_skip = 0
    with open(path) as fh:
        for line in fh:
            n_skip += 1
            line = line.strip()
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nu="):
                    nu = float(body[3:])
                continue
            header = line
            break
    if nu is None:
        raise IOFormatError(f"{path}: missing '# nu=...' metadata line")
    expected = "lon,lat," + ",".join(_PARAM_COLUMNS)
    if header != expected:
        raise IOFormatError(f"{path}: expected header {expected!r}")
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=n_skip, ndmin=2)
    except ValueError as exc:
        raise IOFormatError(f"{path}: {exc}") from None
    if data.shape[1] != 2 + len(_PARAM_COLUMNS):
        raise IOFormatError(f"{path}: wrong column count {data.shape[1]}")
    geom = _geometry_from_columns(data[:, 0], data[:, 1], path)
    return LocalEstimates(
        geometry=geom,
        nu=nu,
        theta=data[:, 2].copy(),
        sigma=data[:, 3].copy(),
        tau=data[:, 4].copy(),
        loglik=data[:, 5].copy(),
        converged=data[:, 7].astype(bool),
        degenerate=data[:, 8].astype(bool),
        sigma_obs=data[:, 6].copy(),
        window_ix=data[:, 9].astype(np.int64),
        window_iy=data[:, 10].astype(np.int64),
    )


def write_grid_binary(path, geometry: GridGeometry, values: np.ndarray):
    """Binary grid: magic, int64 dims, float64 geometry, float64 data."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, np.newaxis]
    if vals.shape[0] != geometry.n_points:
        raise ConfigurationError(
            f"values must have {geometry.n_points} rows, got {vals.shape[0]}"
        )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        np.array([geometry.nx, geometry.ny, vals.shape[1]], dtype="<i8").tofile(fh)
        np.array(
            [geometry.x0, geometry.y0, geometry.dx, geometry.dy], dtype="<f8"
        ).tofile(fh)
        np.ascontiguousarray(vals, dtype="<f8").tofile(fh)


def read_grid_binary(path) -> tuple[GridGeometry, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise IOFormatError(f"{path}: bad magic {magic!r}; not a grid file")
        dims = np.fromfile(fh, dtype="<i8", count=3)
        geo = np.fromfile(fh, dtype="<f8", count=4)
        if dims.size != 3 or geo.size != 4:
            raise IOFormatError(f"{path}: truncated header")
        nx, ny, ncols = (int(v) for v in dims)
        if nx < 1 or ny < 1 or ncols < 1:
            raise IOFormatError(f"{path}: nonsensical dimensions {dims}")
        data = np.fromfile(fh, dtype="<f8")
        if fh.read(1):
            raise IOFormatError(f"{path}: trailing bytes after data block")
    if data.size != nx * ny * ncols:
        raise IOFormatError(
            f"{path}: expected {nx * ny * ncols} doubles, found {data.size}"
        )
    geom = GridGeometry(
        x0=float(geo[0]), y0=float(geo[1]), dx=float(geo[2]), dy=float(geo[3]),
        nx=nx, ny=ny,
    )
    return geom, data.reshape(nx * ny, ncols)


def write_calibration_table(path, table: CalibrationTable):
    with open(path, "w") as fh:
        fh.write("# lkfield calibration table\n")
        fh.write(f"# nu={_fmt(table.nu)}\n")
        fh.write(f"# n_levels={table.n_levels}\n")
        fh.write(f"# coarse_spacing={_fmt(table.coarse_spacing)}\n")
        fh.write(f"# delta={_fmt(table.delta)}\n")
        fh.write(f"# buffer={table.buffer}\n")
        wcols = ",".join(f"w_{l + 1}" for l in range(table.n_levels))
        fh.write(f"theta,a,{wcols},rmse\n")
        for i in range(table.theta.size):
            row = [_fmt(table.theta[i]), _fmt(table.a[i])]
            row.extend(_fmt(w) for w in table.weights[i])
            row.append(_fmt(table.rmse[i]))
            fh.write(",".join(row) + "\n")


def read_calibration_table(path) -> CalibrationTable:
    meta = {}
    n_comment = 0
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                n_comment += 1
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            header = line
            break
    required = ("nu", "n_levels", "coarse_spacing", "delta", "buffer")
    missing = [k for k in required if k not in meta]
    if missing:
        raise IOFormatError(f"{path}: missing metadata {missing}")
    n_levels = int(meta["n_levels"])
    wcols = ",".join(f"w_{l + 1}" for l in range(n_levels))
    if header != f"theta,a,{wcols},rmse":
        raise IOFormatError(f"{path}: unexpected column header {header!r}")
    try:
        data = np.loadtxt(
            path, delimiter=",", comments="#", skiprows=n_comment + 1, ndmin=2
        )
    except ValueError as exc:
        raise IOFormatError(f"{path}: {exc}") from None
    if data.shape[1] != 3 + n_levels:
        raise IOFormatError(f"{path}: wrong column count {data.shape[1]}")
    return CalibrationTable(
        theta=data[:, 0].copy(),
        a=data[:, 1].copy(),
        weights=data[:, 2 : 2 + n_levels].copy(),
        rmse=data[:, -1].copy(),
        nu=float(meta["nu"]),
        n_levels=n_levels,
        coarse_spacing=float(meta["coarse_spacing"]),
        delta=float(meta["delta"]),
        buffer=int(meta["buffer"]),
    )


def _field_to_dict(field: SpatialField) -> dict:
    if field.kind == "constant":
        return {"kind": "constant", "value": field.value}
    if field.kind == "grid":
        return {
            "kind": "grid",
            "geometry": asdict(field.geometry),
            "values": [float(v) for v in field.values],
        }
    raise ConfigurationError(
        f"cannot serialize a {field.kind!r} field; only constant and grid "
        "surfaces are storable"
    )


def _field_from_dict(d: dict, path) -> SpatialField:
    kind = d.get("kind")
    if kind == "constant":
        return SpatialField.constant(d["value"])
    if kind == "grid":
        geom = GridGeometry(**d["geometry"])
        return SpatialField.from_grid(geom, np.asarray(d["values"], dtype=float))
    raise IOFormatError(f"{path}: unknown field kind {kind!r}")


def save_model(path, model: LKModel):
    """Store a model as JSON: lattice layout plus parameter surfaces."""
    lat = model.lattice
    doc = {
        "format": "lkfield-model",
        "version": 1,
        "lattice": {
            "domain": list(lat.domain),
            "coarse_spacing": lat.coarse_spacing,
            "n_levels": lat.n_levels,
            "delta": lat.delta,
            "buffer": lat.buffer,
        },
        "a_fields": [
            a if isinstance(a, float) else [float(v) for v in a]
            for a in model.a_fields
        ],
        "sigma_fields": [_field_to_dict(f) for f in model.sigma_fields],
        "tau_field": _field_to_dict(model.tau_field),
    }
    write_json(path, doc)


_MODEL_KEYS = {"format", "version", "lattice", "a_fields", "sigma_fields", "tau_field"}
_LATTICE_KEYS = {"domain", "coarse_spacing", "n_levels", "delta", "buffer"}


def load_model(path) -> LKModel:
    doc = read_json(path)
    if not isinstance(doc, dict) or doc.get("format") != "lkfield-model":
        raise IOFormatError(f"{path}: not a model descriptor")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise IOFormatError(f"{path}: unknown keys {sorted(unknown)}")
    lat_doc = doc["lattice"]
    unknown = set(lat_doc) - _LATTICE_KEYS
    if unknown:
        raise IOFormatError(f"{path}: unknown lattice keys {sorted(unknown)}")
    lattice = build_lattice(
        tuple(lat_doc["domain"]),
        lat_doc["coarse_spacing"],
        lat_doc["n_levels"],
        lat_doc["delta"],
        lat_doc["buffer"],
    )
    a_fields = [
        np.asarray(a, dtype=float) if isinstance(a, list) else float(a)
        for a in doc["a_fields"]
    ]
    sigma_fields = [_field_from_dict(d, path) for d in doc["sigma_fields"]]
    tau_field = _field_from_dict(doc["tau_field"], path)
    return LKModel(lattice, a_fields, sigma_fields, tau_field)


def write_csv(path, header: str, rows: np.ndarray):
    """Small delimited writer for curve and report tables."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(header.split(",")):
        raise ConfigurationError("rows must be 2-D and match the header width")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in arr:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise IOFormatError(f"{path}: invalid JSON ({exc})") from None
