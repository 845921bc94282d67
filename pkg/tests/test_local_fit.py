import dataclasses

import numpy as np
import pytest

from lkfield.errors import ConfigurationError, ParameterError
from lkfield.geometry import GridGeometry, ParamFields, ReplicateField, SpatialField
from lkfield.local_fit import (
    adjust_estimates,
    LocalEstimates,
    sweep_windows,
    synthetic_ensemble,
    window_mle,
    WindowSpec,
)


CONST = lambda v: SpatialField.constant(v)  # noqa: E731


def _stationary_fields(theta=3.0, sigma=1.0, tau=0.1, nu=1.0):
    return ParamFields(theta=CONST(theta), sigma=CONST(sigma), tau=CONST(tau), nu=nu)


def test_synthetic_ensemble_exact_is_seeded():
    geom = GridGeometry.from_extent(0.0, 10.0, 0.0, 10.0, 11, 11)
    a = synthetic_ensemble(geom, _stationary_fields(), 5, seed=3, method="exact")
    b = synthetic_ensemble(geom, _stationary_fields(), 5, seed=3, method="exact")
    np.testing.assert_array_equal(a.values, b.values)
    c = synthetic_ensemble(geom, _stationary_fields(), 5, seed=4, method="exact")
    assert not np.array_equal(a.values, c.values)


def test_synthetic_ensemble_exact_requires_constant_surfaces():
    geom = GridGeometry.from_extent(0.0, 10.0, 0.0, 10.0, 11, 11)
    fields = ParamFields(
        theta=SpatialField.from_callable(lambda p: 2.0 + 0.1 * p[:, 0]),
        sigma=CONST(1.0),
        tau=CONST(0.1),
        nu=1.0,
    )
    with pytest.raises(ConfigurationError):
        synthetic_ensemble(geom, fields, 4, seed=0, method="exact")
    # local method accepts varying surfaces
    out = synthetic_ensemble(geom, fields, 4, seed=0, method="local", window=7)
    assert out.values.shape == (121, 4)


def test_window_mle_recovers_range_scale():
    geom = GridGeometry.from_extent(0.0, 10.0, 0.0, 10.0, 11, 11)
    data = synthetic_ensemble(geom, _stationary_fields(), 30, seed=21, method="exact")
    fit = window_mle(data, WindowSpec(width=11, nu=1.0))
    assert fit.converged and not fit.degenerate
    assert 1.5 < fit.theta < 6.0
    assert 0.7 < fit.sigma < 1.4
    assert fit.tau < 0.4
    assert np.isfinite(fit.loglik)


def test_window_mle_needs_replicates():
    geom = GridGeometry.from_extent(0.0, 10.0, 0.0, 10.0, 11, 11)
    data = synthetic_ensemble(geom, _stationary_fields(), 1, seed=0, method="exact")
    with pytest.raises(ParameterError):
        window_mle(data, WindowSpec(width=11, nu=1.0))


def test_window_mle_degenerate_data_flagged():
    geom = GridGeometry.from_extent(0.0, 10.0, 0.0, 10.0, 11, 11)
    data = ReplicateField(geom, np.ones((121, 3)))
    fit = window_mle(data, WindowSpec(width=11, nu=1.0))
    assert fit.degenerate
    assert not fit.converged


def test_sweep_grid_must_contain_window():
    geom = GridGeometry.from_extent(0.0, 5.0, 0.0, 5.0, 6, 6)
    data = synthetic_ensemble(geom, _stationary_fields(), 3, seed=0, method="exact")
    with pytest.raises(ConfigurationError):
        sweep_windows(data, WindowSpec(width=11, nu=1.0))


def test_sweep_deterministic_across_workers():
    geom = GridGeometry.from_extent(0.0, 12.0, 0.0, 12.0, 13, 13)
    data = synthetic_ensemble(geom, _stationary_fields(), 8, seed=5, method="exact")
    spec = WindowSpec(width=11, nu=1.0)
    e1 = sweep_windows(data, spec, workers=1)
    e2 = sweep_windows(data, spec, workers=2)
    for name in ("theta", "sigma", "tau", "loglik"):
        np.testing.assert_array_equal(getattr(e1, name), getattr(e2, name))
    assert e1.workers == 1 and e2.workers == 2
    assert e1.task_seconds.shape == (9,)  # (13-10)^2 distinct windows
    assert e1.setup_seconds >= 0.0
    assert e1.total_seconds > 0.0


def test_sweep_boundary_points_share_clipped_windows():
    geom = GridGeometry.from_extent(0.0, 12.0, 0.0, 12.0, 13, 13)
    data = synthetic_ensemble(geom, _stationary_fields(), 6, seed=6, method="exact")
    est = sweep_windows(data, WindowSpec(width=11, nu=1.0), workers=1)
    assert est.theta.shape == (169,)
    # corner point inherits the corner window's estimate
    corner = geom.index(0, 0)
    assert est.window_ix[corner] == 5 and est.window_iy[corner] == 5
    center = geom.index(6, 6)
    assert est.window_ix[center] == 6 and est.window_iy[center] == 6
    assert est.sigma_obs.shape == (169,)


def _constructed_estimates(theta, sigma, tau, sigma_obs):
    geom = GridGeometry.from_extent(0.0, 1.0, 0.0, 1.0, 2, 2)
    n = 4
    return LocalEstimates(
        geometry=geom,
        nu=1.0,
        theta=np.full(n, theta),
        sigma=np.full(n, sigma),
        tau=np.full(n, tau),
        loglik=np.zeros(n),
        converged=np.ones(n, dtype=bool),
        degenerate=np.zeros(n, dtype=bool),
        sigma_obs=np.full(n, sigma_obs),
        window_ix=np.zeros(n, dtype=np.int64),
        window_iy=np.zeros(n, dtype=np.int64),
    )


def test_adjust_small_nugget_strict_inequality():
    # tau below the floor AND sigma above the observed SD: replace sigma
    est = _constructed_estimates(theta=3.0, sigma=1.5, tau=0.002, sigma_obs=1.0)
    out = adjust_estimates(est)
    np.testing.assert_array_equal(out.sigma, 1.0)
    # exactly at the floor: untouched
    est = _constructed_estimates(theta=3.0, sigma=1.5, tau=0.003, sigma_obs=1.0)
    out = adjust_estimates(est)
    np.testing.assert_array_equal(out.sigma, 1.5)
    # below the floor but sigma not inflated: untouched
    est = _constructed_estimates(theta=3.0, sigma=0.9, tau=0.001, sigma_obs=1.0)
    out = adjust_estimates(est)
    np.testing.assert_array_equal(out.sigma, 0.9)


def test_adjust_range_cap_strict_inequality():
    est = _constructed_estimates(theta=15.0, sigma=1.0, tau=0.1, sigma_obs=1.0)
    np.testing.assert_array_equal(adjust_estimates(est).theta, 15.0)
    est = _constructed_estimates(theta=15.0001, sigma=1.0, tau=0.1, sigma_obs=1.0)
    np.testing.assert_array_equal(adjust_estimates(est).theta, 15.0)


def test_adjust_is_idempotent():
    est = _constructed_estimates(theta=22.0, sigma=2.0, tau=0.001, sigma_obs=1.2)
    once = adjust_estimates(est)
    twice = adjust_estimates(once)
    np.testing.assert_array_equal(once.theta, twice.theta)
    np.testing.assert_array_equal(once.sigma, twice.sigma)
    np.testing.assert_array_equal(once.tau, twice.tau)


def test_adjust_leaves_input_untouched():
    est = _constructed_estimates(theta=22.0, sigma=2.0, tau=0.001, sigma_obs=1.2)
    adjust_estimates(est)
    np.testing.assert_array_equal(est.theta, 22.0)
    np.testing.assert_array_equal(est.sigma, 2.0)


def test_to_param_fields_round_trip():
    est = _constructed_estimates(theta=3.0, sigma=1.0, tau=0.1, sigma_obs=1.0)
    pf = est.to_param_fields()
    th, sg, ta = pf.at(np.array([[0.5, 0.5]]))
    assert th[0] == pytest.approx(3.0)
    assert sg[0] == pytest.approx(1.0)
    assert ta[0] == pytest.approx(0.1)
    assert pf.nu == 1.0
