import numpy as np
import pytest
from scipy.integrate import quad

from lkfield.errors import ParameterError, UnsupportedTargetError
from lkfield.kernels import (
    convolution_kernel_psi,
    kernel_smoothness,
    matern_correlation,
    matern_covariance,
    MaternParams,
    wendland_c4,
)


def test_wendland_endpoint_values():
    assert wendland_c4(0.0) == 1.0
    assert wendland_c4(1.0) == 0.0
    assert wendland_c4(2.0) == 0.0
    assert wendland_c4(0.5) == pytest.approx(0.10807291666666667, abs=0, rel=1e-15)


def test_wendland_vectorized_and_monotone():
    d = np.linspace(0.0, 1.0, 101)
    v = wendland_c4(d)
    assert v.shape == d.shape
    assert np.all(np.diff(v) < 0)
    assert np.all(v >= 0)


def test_matern_half_is_exponential():
    d = np.array([0.0, 0.3, 1.0, 2.5, 7.0])
    theta = 1.7
    got = matern_correlation(d, theta, 0.5)
    np.testing.assert_allclose(got, np.exp(-d / theta), rtol=1e-12)


def test_matern_zero_distance_is_one():
    for nu in (0.5, 1.0, 2.0, 3.5):
        assert matern_correlation(0.0, 2.0, nu) == 1.0


def test_matern_large_distance_underflows_to_zero():
    # K_nu underflow must not produce NaN
    v = matern_correlation(1e6, 1.0, 2.0)
    assert v == 0.0


def test_matern_bounds_and_smoothness_ordering():
    d = np.linspace(0.01, 5.0, 50)
    c1 = matern_correlation(d, 2.0, 1.0)
    c2 = matern_correlation(d, 2.0, 2.0)
    assert np.all(c1 <= 1.0) and np.all(c1 >= 0.0)
    # higher smoothness decays slower at short range
    assert np.all(c2[d < 1.0] >= c1[d < 1.0])


def test_matern_covariance_nugget_only_on_diagonal():
    p = MaternParams(sigma=2.0, theta=1.0, nu=1.0, tau=0.5)
    d = np.array([0.0, 0.0, 1.0])
    v = matern_covariance(d, p)
    assert v[0] == v[1] == pytest.approx(4.0 + 0.25)
    assert v[2] < 4.0


def test_matern_invalid_params():
    with pytest.raises(ParameterError):
        matern_correlation(1.0, -1.0, 1.0)
    with pytest.raises(ParameterError):
        matern_correlation(1.0, 1.0, 0.0)


def test_kernel_smoothness_planar_value():
    # nu_target 2 in two dimensions needs an exponential kernel
    assert kernel_smoothness(2.0, 2) == pytest.approx(0.5)
    assert kernel_smoothness(3.0, 2) == pytest.approx(1.0)


def test_kernel_smoothness_rejects_too_rough_target():
    with pytest.raises(UnsupportedTargetError):
        kernel_smoothness(1.0, 2)
    with pytest.raises(UnsupportedTargetError):
        kernel_smoothness(0.5, 2)


def test_psi_normalization_closed_form():
    # nu_k = 1/2: psi(d) = sqrt(2/pi) exp(-d)
    assert convolution_kernel_psi(0.0, 2.0) == pytest.approx(np.sqrt(2.0 / np.pi))
    d = np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(
        convolution_kernel_psi(d, 2.0), np.sqrt(2.0 / np.pi) * np.exp(-d), rtol=1e-12
    )


@pytest.mark.parametrize("nu_target", [2.0, 3.0, 4.0])
def test_psi_unit_energy(nu_target):
    total, _ = quad(
        lambda r: convolution_kernel_psi(r, nu_target) ** 2 * 2.0 * np.pi * r,
        0.0,
        60.0,
        limit=200,
    )
    assert total == pytest.approx(1.0, abs=2e-6)
