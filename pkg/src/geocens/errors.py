"""Exception hierarchy shared across the package."""


class GeocensError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GeocensError):
    """Invalid covariance family, smoothness value, or option combination."""


class DataValidationError(GeocensError):
    """Malformed dataset, file schema, or mismatched geometry."""


class ModelSpecificationError(GeocensError):
    """Trend matrix is rank deficient or otherwise unusable."""


class SingularCovarianceError(GeocensError):
    """A covariance matrix failed its Cholesky factorization."""


class UnsupportedMethodError(GeocensError):
    """The requested algorithm does not support this censoring type."""


class NumericalError(GeocensError):
    """An optimizer or iterative routine produced non-finite values."""


class DegenerateCurvatureError(GeocensError):
    """All curvature eigenvalues fell below the rank threshold."""
