"""Exception and warning types shared across the package."""


class PathbfError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(PathbfError):
    """A matrix required to be positive definite failed its Cholesky factorization."""


class DomainError(PathbfError):
    """A scalar argument lies outside the mathematically valid domain."""


class GridError(PathbfError):
    """An integration grid is unordered, has bad endpoints, or mismatched lengths."""


class DegenerateSeries(PathbfError):
    """A constant series was passed where sample variation is required."""


class OverparameterizedModel(PathbfError):
    """Factor count implies more free parameters than a covariance matrix has."""


class NumericalBreakdown(PathbfError):
    """A Gibbs conditional lost positive definiteness; indicates a bug, aborts the chain."""


class SingularInformation(PathbfError):
    """Observed information matrix is numerically singular (boundary / degeneracy)."""


class OptimFailure(PathbfError):
    """Local optimization could not improve on its starting point."""


class ParseError(PathbfError):
    """A dataset file could not be ingested; message carries row/column location."""


class ConfigError(PathbfError):
    """Invalid run configuration (maps to CLI exit code 2)."""


class DegenerateData(UserWarning):
    """Sample covariance is singular (e.g. all rows equal); results may be unusable."""


class WeightDegeneracy(UserWarning):
    """A single importance weight dominates the estimator (max normalized weight > 0.5)."""


class AcceptanceRateWarning(UserWarning):
    """Metropolis acceptance rate left the healthy band after adaptation ended."""


class OptimFailureWarning(UserWarning):
    """Optimizer returned the chain argmax because no improvement was found."""
