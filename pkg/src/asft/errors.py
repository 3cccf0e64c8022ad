"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array has the wrong shape or violates a structural requirement."""


class DimensionError(ShapeError):
    """Incompatible or non-square dimensions."""


class ConfigurationError(ValueError):
    """Invalid configuration value (e.g. k > n)."""


class NumericError(ArithmeticError):
    """Non-finite values or numerical breakdown during a computation."""


class DegenerateSpectrumError(NumericError):
    """Eigenvalue spectrum too degenerate to extract the requested directions."""


class ConditioningError(NumericError):
    """Kernel/system matrix is singular even after jitter."""


class TrainingError(NumericError):
    """Optimization diverged; carries the failing epoch/iteration index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class DegenerateEvaluationError(RuntimeError):
    """A QoI evaluation produced zero valid unique designs."""


class EmptyInputError(ValueError):
    """An operation received an empty collection."""
