import numpy as np
import pytest

from lkfield.errors import ConfigurationError, ParameterError, QuadratureError
from lkfield.geometry import GridGeometry, ParamFields, SpatialField
from lkfield.kernels import convolution_kernel_psi, matern_correlation, matern_covariance, MaternParams
from lkfield.oracle import (
    convolution_correlation,
    convolution_covariance,
    dense_simulate,
    local_simulate,
    QuadratureGrid,
    TESTCASE_DOMAIN,
)
from lkfield.oracle import testcase_theta as case_surfaces  # alias dodges collection


PSI = lambda d: convolution_kernel_psi(d, 2.0)  # noqa: E731
CONST = lambda v: SpatialField.constant(v)  # noqa: E731


def test_constant_range_reduces_to_matern():
    theta = 1.5
    for d in (0.4, 1.0, 2.5, 4.0):
        got = convolution_correlation(
            np.array([0.0, 0.0]), np.array([d, 0.0]), CONST(theta), CONST(1.0), PSI
        )
        assert got == pytest.approx(matern_correlation(d, theta, 2.0), abs=2e-3)


def test_covariance_scales_with_endpoint_sds():
    s, t = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    base = convolution_covariance(s, t, CONST(2.0), CONST(1.0), PSI)
    scaled = convolution_covariance(s, t, CONST(2.0), CONST(3.0), PSI)
    assert scaled == pytest.approx(9.0 * base, rel=1e-10)


def test_quadrature_grid_resolution_rules():
    g = QuadratureGrid()
    spacing, padding = g.resolve([2.0, 4.0])
    assert spacing == pytest.approx(0.25)  # min theta / 8
    assert padding == pytest.approx(32.0)  # 8 * max theta
    h = QuadratureGrid(spacing=0.1, padding=5.0)
    assert h.resolve([2.0, 4.0]) == (0.1, 5.0)


def test_insufficient_padding_raises():
    with pytest.raises(QuadratureError):
        convolution_covariance(
            np.array([0.0, 0.0]), np.array([1.0, 0.0]), CONST(2.0), CONST(1.0), PSI,
            QuadratureGrid(padding=1.0),
        )


def test_unnormalized_kernel_rejected():
    bad = lambda d: np.exp(-np.asarray(d))  # noqa: E731
    with pytest.raises(ParameterError):
        convolution_covariance(
            np.array([0.0, 0.0]), np.array([1.0, 0.0]), CONST(2.0), CONST(1.0), bad
        )


def test_testcase_surfaces():
    pts = np.array([[-17.0, 0.0], [0.0, 0.0], [7.0, 0.0]])
    f1 = case_surfaces(1)
    th, sg, ta = f1.at(pts)
    np.testing.assert_array_equal(th, [5.0, 5.0, 1.9])
    np.testing.assert_array_equal(sg, 1.0)
    np.testing.assert_array_equal(ta, 0.0)
    assert f1.nu == 2.0
    f2 = case_surfaces(2)
    th2, _, _ = f2.at(pts)
    np.testing.assert_allclose(th2, 3.5 - (5.0 / 48.0) * pts[:, 0], rtol=1e-12)
    assert TESTCASE_DOMAIN == (-24.0, 24.0, -24.0, 24.0)
    with pytest.raises(ParameterError):
        case_surfaces(3)


def test_dense_simulate_is_seeded_and_sized():
    cov = matern_covariance(
        np.abs(np.subtract.outer(np.arange(6.0), np.arange(6.0))),
        MaternParams(sigma=1.0, theta=2.0, nu=1.0),
    )
    a = dense_simulate(cov, 4, seed=5)
    b = dense_simulate(cov, 4, seed=5)
    assert a.shape == (6, 4)
    np.testing.assert_array_equal(a, b)
    c = dense_simulate(cov, 4, seed=6)
    assert not np.array_equal(a, c)


def test_dense_simulate_sample_covariance():
    n = 5
    d = np.abs(np.subtract.outer(np.arange(float(n)), np.arange(float(n))))
    cov = matern_covariance(d, MaternParams(sigma=1.0, theta=3.0, nu=1.0))
    draws = dense_simulate(cov, 40000, seed=17)
    samp = draws @ draws.T / draws.shape[1]
    assert np.abs(samp - cov).max() < 0.05


def test_dense_simulate_methods_agree_in_law():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((8, 8))
    cov = m @ m.T + 8 * np.eye(8)
    for method in ("cholesky", "eigen"):
        draws = dense_simulate(cov, 20000, seed=3, method=method)
        samp = draws @ draws.T / draws.shape[1]
        assert np.abs(samp - cov).max() / np.abs(cov).max() < 0.1


def test_local_simulate_marginal_variance():
    # field value is a fixed weight vector dotted with iid noise, so the
    # sample variance over draws must approach sigma^2 + tau^2
    geom = GridGeometry.from_extent(0.0, 5.0, 0.0, 5.0, 6, 6)
    fields = ParamFields(theta=CONST(2.0), sigma=CONST(1.5), tau=CONST(0.5), nu=2.0)
    n = 1200
    draws = np.stack(
        [local_simulate(fields, geom, window=5, seed=s) for s in range(n)]
    )
    var = draws.var(axis=0)
    target = 1.5**2 + 0.5**2
    se = target * np.sqrt(2.0 / n)
    assert np.abs(var - target).max() < 6 * se


def test_local_simulate_deterministic():
    geom = GridGeometry.from_extent(0.0, 11.0, 0.0, 11.0, 12, 12)
    fields = ParamFields(theta=CONST(3.0), sigma=CONST(1.0), tau=CONST(0.1), nu=1.0)
    a = local_simulate(fields, geom, window=11, seed=9)
    b = local_simulate(fields, geom, window=11, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (144,)


def test_local_simulate_window_must_fit():
    geom = GridGeometry.from_extent(0.0, 9.0, 0.0, 9.0, 10, 10)
    fields = ParamFields(theta=CONST(3.0), sigma=CONST(1.0), tau=CONST(0.1), nu=1.0)
    with pytest.raises(ConfigurationError):
        local_simulate(fields, geom, window=11, seed=0)


def test_local_simulate_zero_sigma_zero_tau():
    geom = GridGeometry.from_extent(0.0, 5.0, 0.0, 5.0, 6, 6)
    fields = ParamFields(theta=CONST(2.0), sigma=CONST(0.0), tau=CONST(0.0), nu=1.0)
    np.testing.assert_array_equal(local_simulate(fields, geom, window=5, seed=1), 0.0)


def test_local_simulate_neighbor_correlation_sign():
    geom = GridGeometry.from_extent(0.0, 7.0, 0.0, 7.0, 8, 8)
    fields = ParamFields(theta=CONST(4.0), sigma=CONST(1.0), tau=CONST(0.0), nu=2.0)
    draws = np.stack(
        [local_simulate(fields, geom, window=7, seed=s) for s in range(200)]
    )
    center = geom.index(3, 3)
    right = geom.index(4, 3)
    far = geom.index(7, 7)
    c_near = np.mean(draws[:, center] * draws[:, right])
    c_far = np.mean(draws[:, center] * draws[:, far])
    assert c_near > 0.6
    assert c_near > c_far
