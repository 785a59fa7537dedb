"""Exception types shared across the package."""


class EmbedHomError(Exception):
    """Base class for all package-specific errors."""


class InvalidCoefficientError(EmbedHomError):
    """A matrix or field violates symmetry or the ellipticity bounds."""


class GeometryError(EmbedHomError):
    """Mesh or field geometry is inconsistent (domain too small, radii too large...)."""


class ConvergenceError(EmbedHomError):
    """An iterative solver stopped before reaching its tolerance.

    Carries the final residual and iteration count so callers can report
    partial results instead of losing the run.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BracketError(EmbedHomError):
    """The scalar fixed-point function violates its sign bracket at the bounds."""


class ConfigError(EmbedHomError):
    """An experiment config failed schema or cross-field validation."""
