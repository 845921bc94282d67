import numpy as np
import pytest

from lkfield.encode import (
    build_calibration_table,
    calibrate_stationary,
    CalibrationTable,
    _CurveEngine,
    encode_nonstationary,
    LKConfig,
)
from lkfield.errors import CalibrationError, EncodingError, ParameterError
from lkfield.geometry import GridGeometry
from lkfield.lattice import build_lattice
from lkfield.lkmodel import correlation_curve, LKModel
from lkfield.local_fit import LocalEstimates


def _estimates(geom, theta, nu=1.0, sigma=1.0, tau=0.05):
    n = geom.n_points
    th = np.broadcast_to(np.asarray(theta, dtype=float), (n,)).copy()
    return LocalEstimates(
        geometry=geom,
        nu=nu,
        theta=th,
        sigma=np.full(n, float(sigma)),
        tau=np.full(n, float(tau)),
        loglik=np.zeros(n),
        converged=np.ones(n, dtype=bool),
        degenerate=np.zeros(n, dtype=bool),
        sigma_obs=np.full(n, float(sigma)),
        window_ix=np.zeros(n, dtype=np.int64),
        window_iy=np.zeros(n, dtype=np.int64),
    )


def test_curve_engine_matches_factorization_route():
    # the fast eigenbasis evaluation must agree with the model built from
    # actual sparse factorizations at matching parameters
    config = LKConfig()
    theta = 2.0
    engine = _CurveEngine(theta, 1.0, config)
    a = 4.8
    weights = np.array([0.5, 0.3, 0.2])
    fast = engine.correlations(a, weights)

    half = 3.0 * theta + 2.0 * config.coarse_spacing
    lat = build_lattice((-half, half, -half, half), config.coarse_spacing,
                        config.n_levels, config.delta, buffer=config.buffer)
    model = LKModel(
        lat,
        a_fields=[a] * config.n_levels,
        sigma_fields=[float(np.sqrt(w)) for w in weights],
    )
    center = np.array([0.0, 0.0])
    slow = correlation_curve(model, center, engine.points[1:])[:, 1]
    np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_curve_engine_distance_layout():
    engine = _CurveEngine(2.0, 1.0, LKConfig(), n_dist=40)
    # two rays of 40 distances each over (0, 3 theta]
    assert engine.distances.shape == (80,)
    assert engine.distances.max() == pytest.approx(6.0)
    assert engine.distances.min() > 0.0


def test_calibrate_stationary_fits_matern_shape():
    a, weights, rmse = calibrate_stationary(3.0, 1.0, LKConfig())
    assert a > 4.0
    assert weights.shape == (3,)
    assert weights.sum() == pytest.approx(1.0)
    assert np.all(weights >= 0)
    assert rmse < 0.05


def test_calibrate_rejects_unreachable_ceiling():
    with pytest.raises(CalibrationError):
        calibrate_stationary(3.0, 1.0, LKConfig(), error_ceiling=1e-6)


def test_table_lookup_interpolates_and_clamps():
    thetas = np.array([2.0, 4.0, 8.0])
    table = build_calibration_table(thetas, 1.0, LKConfig())
    a_grid, w_grid = table.lookup(thetas)
    np.testing.assert_allclose(a_grid, table.a, rtol=1e-12)
    np.testing.assert_allclose(w_grid, table.weights, rtol=1e-12)
    # interpolation keeps a above the stability floor and weights normalized
    a_mid, w_mid = table.lookup(np.array([3.0, 5.7]))
    assert np.all(a_mid > 4.0)
    np.testing.assert_allclose(w_mid.sum(axis=1), 1.0, rtol=1e-12)
    assert min(table.a[0], table.a[1]) <= a_mid[0] <= max(table.a[0], table.a[1])
    with pytest.warns(RuntimeWarning):
        a_out, _ = table.lookup(np.array([50.0]))
    assert a_out[0] == pytest.approx(table.a[-1])


def test_table_validation():
    config = LKConfig()
    good = build_calibration_table(np.array([2.0, 4.0]), 1.0, config)
    with pytest.raises(ParameterError):
        CalibrationTable(
            nu=1.0,
            theta=np.array([4.0, 2.0]),  # not increasing
            a=good.a,
            weights=good.weights,
            rmse=good.rmse,
            n_levels=config.n_levels,
            coarse_spacing=config.coarse_spacing,
            delta=config.delta,
            buffer=config.buffer,
        )


def test_encode_round_trips_constant_surface():
    geom = GridGeometry.from_extent(-10.0, 10.0, -10.0, 10.0, 21, 21)
    est = _estimates(geom, theta=3.0, tau=0.0)
    table = build_calibration_table(np.array([2.0, 3.0, 4.0]), 1.0, LKConfig())
    model = encode_nonstationary(est, table)
    assert model.lattice.n_levels == 3
    assert model.lattice.domain == geom.extent()
    # marginal SD comes back as the encoded sigma
    from lkfield.lkmodel import lk_covariance

    var = lk_covariance(model, np.zeros(2), np.zeros(2))
    assert var == pytest.approx(1.0, rel=1e-8)


def test_encode_smoothness_mismatch_rejected():
    geom = GridGeometry.from_extent(-10.0, 10.0, -10.0, 10.0, 21, 21)
    est = _estimates(geom, theta=3.0, nu=2.0)
    table = build_calibration_table(np.array([2.0, 4.0]), 1.0, LKConfig())
    with pytest.raises(EncodingError):
        encode_nonstationary(est, table)


def test_encode_rejects_nan_boxes():
    geom = GridGeometry.from_extent(-10.0, 10.0, -10.0, 10.0, 21, 21)
    est = _estimates(geom, theta=3.0)
    est.theta[5] = np.nan
    table = build_calibration_table(np.array([2.0, 4.0]), 1.0, LKConfig())
    with pytest.raises(EncodingError) as err:
        encode_nonstationary(est, table)
    assert "5" in str(err.value)


def test_encoded_correlation_tracks_target_range():
    # larger fitted theta must produce slower correlation decay
    geom = GridGeometry.from_extent(-12.0, 12.0, -12.0, 12.0, 25, 25)
    table = build_calibration_table(np.array([1.5, 3.0, 6.0]), 1.0, LKConfig())
    targets = np.column_stack([np.linspace(0.5, 5.0, 10), np.zeros(10)])
    center = np.zeros(2)
    short = encode_nonstationary(_estimates(geom, 1.5), table)
    long = encode_nonstationary(_estimates(geom, 6.0), table)
    c_short = correlation_curve(short, center, targets)[:, 1]
    c_long = correlation_curve(long, center, targets)[:, 1]
    assert np.all(c_long > c_short)
