"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shapes, widths or hyperparameters that cannot work together."""


class ContractViolation(RuntimeError):
    """An operation was called in a state where it is not defined."""


class TrainingError(RuntimeError):
    """A non-finite loss or parameter appeared during training."""


class UndefinedTTCError(ZeroDivisionError):
    """Agent and obstacle share a longitudinal speed, so TTC does not exist."""


class ActionClippedWarning(UserWarning):
    """An action outside [-1, 1] reached the environment and was clipped."""
