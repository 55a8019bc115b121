"""Exception hierarchy shared across the package."""


class TvgraphsError(Exception):
    """Base class for all package errors."""


class ParameterError(TvgraphsError, ValueError):
    """An argument is outside its valid range."""


class ShapeError(TvgraphsError, ValueError):
    """Array arguments have incompatible shapes."""


class ConfigurationError(TvgraphsError, ValueError):
    """Inconsistent combination of configured objects (e.g. kernel side mismatch)."""


class NumericOverflowError(TvgraphsError, FloatingPointError):
    """A linear predictor or loss evaluated to a non-finite value."""


class NonconvergenceError(TvgraphsError, RuntimeError):
    """A solver diverged or failed to make progress.

    Carries the time index ``k`` of the offending subproblem when applicable.
    """

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class DivergenceError(NonconvergenceError):
    """Objective became non-finite during iteration."""


class ParseError(TvgraphsError, ValueError):
    """A file could not be parsed; carries location info in the message."""


class IntegrityError(TvgraphsError, ValueError):
    """On-disk payload contradicts its manifest or mask."""


class MissingMetadataError(IntegrityError):
    """A required manifest file is absent."""


class DependencyError(TvgraphsError, FileNotFoundError):
    """An upstream pipeline artifact required by a subcommand is missing."""
