"""Exception types shared across the toolkit.

The CLI maps each class to a distinct exit code, so library code should
raise these rather than bare exceptions whenever the failure category
matters to a caller.
"""


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


class FormatError(ValueError):
    """A serialized artifact (raster, checkpoint, table) is malformed."""


class ModeMismatchError(ValueError):
    """Estimator and frame disagree on channel mode or shape."""


class NoConsensusError(RuntimeError):
    """RANSAC found no model supported by a minimal sample."""


class ConvergenceError(RuntimeError):
    """Iterative solve stopped before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual
