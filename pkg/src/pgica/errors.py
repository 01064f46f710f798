"""Exception types shared across the package."""


class PgicaError(Exception):
    """Base class for all package errors."""


class SingularMatrix(PgicaError, ValueError):
    """A matrix that must be invertible has a pivot below the relative threshold."""


class NotPositiveDefinite(PgicaError, ValueError):
    """Symmetric factorization hit a non-positive pivot."""


class InvalidParameter(PgicaError, ValueError):
    pass


class NonFinite(PgicaError, ValueError):
    pass


class ConditioningFailure(PgicaError, RuntimeError):
    pass


class DegenerateColumn(PgicaError, ValueError):
    """A source column has zero variance, so its correlation is undefined."""


class Diverged(PgicaError, RuntimeError):
    """The EM objective decreased, which the envelope bound rules out."""


class InsufficientSamples(PgicaError, ValueError):
    pass


class NoConvergenceWarning(UserWarning):
    pass
