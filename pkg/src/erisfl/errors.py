"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A parameter or configuration value is outside its valid range."""


class DimensionError(ValueError):
    """Vector/matrix operands have incompatible shapes."""


class ProtocolError(RuntimeError):
    """A protocol message set is inconsistent (missing, duplicate, or
    incomplete contributions)."""


class InfeasibilityError(RuntimeError):
    """No learning rate satisfies the stepsize constraints for the given
    constants."""


class ModelViolationError(RuntimeError):
    """Observed statistics contradict a modelling assumption (e.g. marginal
    variance below conditional variance)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss.  Carries the partial log so the
    caller can flush it before aborting."""

    def __init__(self, message, partial_log=None):
        super().__init__(message)
        self.partial_log = partial_log
