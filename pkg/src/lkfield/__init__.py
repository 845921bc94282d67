"""Locally stationary Matérn fitting and lattice-process encoding.

The package covers a four-stage workflow for replicated spatial fields:
fit stationary Matérn parameters in moving windows, repair the usual
boundary artifacts, encode the local estimates into one sparse
multiresolution lattice process, and simulate from it.  A brute-force
convolution-process covariance serves as the validation oracle.
"""

from .encode import (
    CalibrationTable,
    LKConfig,
    build_calibration_table,
    calibrate_stationary,
    encode_nonstationary,
)
from .errors import (
    CalibrationError,
    ConfigurationError,
    CoverageError,
    DegenerateVarianceError,
    EncodingError,
    FactorizationError,
    IndefiniteSystemError,
    IOFormatError,
    LKFieldError,
    ParameterError,
    QuadratureError,
    StabilityError,
    UnsupportedTargetError,
)
from .geometry import GridGeometry, ParamFields, ReplicateField, SpatialField
from .kernels import (
    MaternParams,
    convolution_kernel_psi,
    kernel_smoothness,
    matern_correlation,
    matern_covariance,
    wendland_c4,
)
from .lattice import (
    BasisMatrix,
    LatticeLevel,
    MultiresLattice,
    basis_matrix,
    build_lattice,
    normalize_basis,
)
from .lkmodel import (
    LikelihoodResult,
    LKModel,
    correlation_curve,
    covariance_matrix,
    lk_covariance,
    log_likelihood,
    simulate,
)
from .local_fit import (
    LocalEstimates,
    WindowFit,
    WindowSpec,
    adjust_estimates,
    sweep_windows,
    synthetic_ensemble,
    window_mle,
)
from .oracle import (
    QuadratureGrid,
    TESTCASE_DOMAIN,
    convolution_correlation,
    convolution_covariance,
    dense_simulate,
    local_simulate,
    testcase_theta,
)
from .sar import SparseCholesky, a_to_kappa, build_sar, precision, simulate_coefficients

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # kernels
    "MaternParams", "wendland_c4", "matern_correlation", "matern_covariance",
    "convolution_kernel_psi", "kernel_smoothness",
    # geometry
    "GridGeometry", "SpatialField", "ReplicateField", "ParamFields",
    # lattice
    "LatticeLevel", "MultiresLattice", "BasisMatrix",
    "build_lattice", "basis_matrix", "normalize_basis",
    # sar
    "build_sar", "precision", "a_to_kappa", "simulate_coefficients", "SparseCholesky",
    # model
    "LKModel", "LikelihoodResult", "lk_covariance", "covariance_matrix",
    "simulate", "log_likelihood", "correlation_curve",
    # oracle
    "QuadratureGrid", "TESTCASE_DOMAIN", "convolution_covariance",
    "convolution_correlation", "testcase_theta", "dense_simulate", "local_simulate",
    # local fitting
    "WindowSpec", "WindowFit", "LocalEstimates", "window_mle", "sweep_windows",
    "adjust_estimates", "synthetic_ensemble",
    # encoding
    "LKConfig", "CalibrationTable", "calibrate_stationary",
    "build_calibration_table", "encode_nonstationary",
    # errors
    "LKFieldError", "ConfigurationError", "ParameterError", "UnsupportedTargetError",
    "IOFormatError", "CoverageError", "StabilityError", "FactorizationError",
    "IndefiniteSystemError", "DegenerateVarianceError", "QuadratureError",
    "CalibrationError", "EncodingError",
]
