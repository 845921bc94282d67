"""Exception types shared across the package.

Every error carries a short machine-readable ``category`` string; the
command line tool prints it as part of its single-line error report, so
the set of categories is part of the public interface.
"""

__all__ = [
    "LKFieldError",
    "ConfigurationError",
    "ParameterError",
    "UnsupportedTargetError",
    "IOFormatError",
    "CoverageError",
    "StabilityError",
    "FactorizationError",
    "IndefiniteSystemError",
    "DegenerateVarianceError",
    "QuadratureError",
    "CalibrationError",
    "EncodingError",
]


class LKFieldError(Exception):
    """Base class for errors raised by this package."""

    category = "error"


class ConfigurationError(LKFieldError, ValueError):
    """Invalid run configuration (grids, windows, unknown options)."""

    category = "config"


class ParameterError(LKFieldError, ValueError):
    """Invalid numeric parameter (nonpositive range, bad smoothness, ...)."""

    category = "config"


class UnsupportedTargetError(ParameterError):
    """Requested target outside the supported model family."""

    category = "config"


class IOFormatError(LKFieldError):
    """Malformed input file (bad magic, wrong column count, ...)."""

    category = "io"


class CoverageError(LKFieldError):
    """A location is outside the support of every basis function."""

    category = "coverage"


class StabilityError(LKFieldError, ValueError):
    """Autoregressive center weight at or below the stability threshold."""

    category = "stability"


class FactorizationError(LKFieldError):
    """A matrix factorization failed (singular or not positive definite)."""

    category = "numerics"


class IndefiniteSystemError(FactorizationError):
    """Observation covariance is rank deficient and has no nugget."""

    category = "numerics"


class DegenerateVarianceError(LKFieldError):
    """A requested correlation involves a zero-variance location."""

    category = "numerics"


class QuadratureError(LKFieldError):
    """Numerical integration grid cannot capture the kernel mass."""

    category = "oracle"


class CalibrationError(LKFieldError):
    """Stationary calibration failed or exceeded its error ceiling."""

    category = "calibration"


class EncodingError(LKFieldError):
    """Local estimates cannot be encoded into a lattice model."""

    category = "encoding"
