"""Exception types shared across the package."""


class MorphbenchError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MorphbenchError):
    """Malformed or inconsistent manifests, feature files, or selections."""


class FitError(MorphbenchError):
    """Numerical failure while fitting a model (degenerate input, no convergence)."""
