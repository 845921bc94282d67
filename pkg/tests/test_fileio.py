import numpy as np
import pytest

from lkfield import fileio
from lkfield.encode import build_calibration_table, encode_nonstationary, LKConfig
from lkfield.errors import ConfigurationError, IOFormatError
from lkfield.geometry import GridGeometry, ReplicateField
from lkfield.lkmodel import simulate
from lkfield.local_fit import LocalEstimates


def _geom(nx=5, ny=4):
    return GridGeometry.from_extent(-1.5, 2.5, 10.0, 13.0, nx, ny)


def _replicates(seed=0):
    g = _geom()
    vals = np.random.default_rng(seed).standard_normal((g.n_points, 3))
    return ReplicateField(g, vals)


def _estimates():
    g = _geom()
    n = g.n_points
    rng = np.random.default_rng(1)
    return LocalEstimates(
        geometry=g,
        nu=1.0,
        theta=rng.uniform(1, 5, n),
        sigma=rng.uniform(0.5, 2, n),
        tau=rng.uniform(0, 0.2, n),
        loglik=rng.standard_normal(n) * 100,
        converged=rng.integers(0, 2, n).astype(bool),
        degenerate=np.zeros(n, dtype=bool),
        sigma_obs=rng.uniform(0.5, 2, n),
        window_ix=rng.integers(0, 3, n),
        window_iy=rng.integers(0, 2, n),
    )


def test_replicates_round_trip_bitwise(tmp_path):
    path = tmp_path / "data.csv"
    data = _replicates()
    fileio.write_replicates(path, data)
    back = fileio.read_replicates(path)
    assert back.values.tobytes() == data.values.tobytes()
    assert back.geometry == data.geometry
    # writing the reread data reproduces the file byte for byte
    path2 = tmp_path / "data2.csv"
    fileio.write_replicates(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_replicates_reader_validates_header(tmp_path):
    path = tmp_path / "data.csv"
    fileio.write_replicates(path, _replicates())
    text = path.read_text().replace("rep_1", "rep_x")
    path.write_text(text)
    with pytest.raises(IOFormatError):
        fileio.read_replicates(path)


def test_replicates_reader_rejects_scrambled_rows(tmp_path):
    path = tmp_path / "data.csv"
    fileio.write_replicates(path, _replicates())
    lines = path.read_text().splitlines()
    lines[1], lines[2] = lines[2], lines[1]  # break row-major ordering
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IOFormatError):
        fileio.read_replicates(path)


def test_params_round_trip_bitwise(tmp_path):
    path = tmp_path / "params.csv"
    est = _estimates()
    fileio.write_params(path, est)
    back = fileio.read_params(path)
    for name in ("theta", "sigma", "tau", "loglik", "sigma_obs"):
        assert getattr(back, name).tobytes() == getattr(est, name).tobytes()
    np.testing.assert_array_equal(back.converged, est.converged)
    np.testing.assert_array_equal(back.window_ix, est.window_ix)
    assert back.nu == est.nu
    assert back.geometry == est.geometry


def test_grid_binary_round_trip(tmp_path):
    path = tmp_path / "grid.bin"
    g = _geom()
    vals = np.random.default_rng(7).standard_normal((g.n_points, 2))
    fileio.write_grid_binary(path, g, vals)
    g2, v2 = fileio.read_grid_binary(path)
    assert g2 == g
    assert v2.tobytes() == vals.tobytes()


def test_grid_binary_rejects_corruption(tmp_path):
    path = tmp_path / "grid.bin"
    g = _geom()
    vals = np.zeros((g.n_points, 1))
    fileio.write_grid_binary(path, g, vals)
    raw = path.read_bytes()
    (tmp_path / "bad_magic.bin").write_bytes(b"XXGRID9\x00" + raw[8:])
    with pytest.raises(IOFormatError):
        fileio.read_grid_binary(tmp_path / "bad_magic.bin")
    (tmp_path / "truncated.bin").write_bytes(raw[:-16])
    with pytest.raises(IOFormatError):
        fileio.read_grid_binary(tmp_path / "truncated.bin")
    (tmp_path / "trailing.bin").write_bytes(raw + b"\x00" * 8)
    with pytest.raises(IOFormatError):
        fileio.read_grid_binary(tmp_path / "trailing.bin")


def test_calibration_table_round_trip(tmp_path):
    table = build_calibration_table(np.array([2.0, 4.0]), 1.0, LKConfig())
    path = tmp_path / "table.csv"
    fileio.write_calibration_table(path, table)
    back = fileio.read_calibration_table(path)
    assert back.theta.tobytes() == table.theta.tobytes()
    assert back.a.tobytes() == table.a.tobytes()
    assert back.weights.tobytes() == table.weights.tobytes()
    assert back.nu == table.nu
    assert back.coarse_spacing == table.coarse_spacing
    assert back.n_levels == table.n_levels


def test_model_round_trip_reproduces_simulation(tmp_path):
    geom = GridGeometry.from_extent(-10.0, 10.0, -10.0, 10.0, 21, 21)
    n = geom.n_points
    est = LocalEstimates(
        geometry=geom,
        nu=1.0,
        theta=np.linspace(2.0, 4.0, n),
        sigma=np.full(n, 1.0),
        tau=np.full(n, 0.1),
        loglik=np.zeros(n),
        converged=np.ones(n, dtype=bool),
        degenerate=np.zeros(n, dtype=bool),
        sigma_obs=np.full(n, 1.0),
        window_ix=np.zeros(n, dtype=np.int64),
        window_iy=np.zeros(n, dtype=np.int64),
    )
    table = build_calibration_table(np.array([2.0, 3.0, 4.0]), 1.0, LKConfig())
    model = encode_nonstationary(est, table)
    path = tmp_path / "model.json"
    fileio.save_model(path, model)
    back = fileio.load_model(path)
    locs = geom.locations()[::7]
    a = simulate(model, locs, 3, seed=11)
    b = simulate(back, locs, 3, seed=11)
    assert a.tobytes() == b.tobytes()


def test_model_loader_rejects_unknown_keys(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"format": "lkfield-model", "version": 1, "mystery": 3}')
    with pytest.raises(IOFormatError):
        fileio.load_model(path)


def test_read_json_reports_bad_syntax(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{nope")
    with pytest.raises(IOFormatError):
        fileio.read_json(path)


def test_write_csv_plain_rows(tmp_path):
    path = tmp_path / "rows.csv"
    fileio.write_csv(path, "a,b", np.array([[1.0, 2.5], [3.0, -0.125]]))
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b"
    assert lines[1] == "1.0,2.5"
    assert lines[2] == "3.0,-0.125"
