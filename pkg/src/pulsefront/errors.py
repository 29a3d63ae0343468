"""Exception hierarchy shared across the package."""


class PulsefrontError(Exception):
    """Base class for all package errors."""


class GeometryError(PulsefrontError):
    """Invalid channel geometry (non-periodic or crossing walls, bad grid)."""


class ConfigError(PulsefrontError):
    """Malformed or inconsistent run configuration."""


class SolveError(PulsefrontError):
    """A linear solve failed to reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConvergenceError(PulsefrontError):
    """An outer (fixed-point / eigen / root) iteration failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class DivergenceError(PulsefrontError):
    """Solver state left its physically admissible range."""


class ArtifactError(PulsefrontError):
    """Checkpoint / report artifact is missing fields or has a wrong schema."""
