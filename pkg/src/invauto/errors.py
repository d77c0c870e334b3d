"""Exception types shared across the package."""


class InvAutoError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(InvAutoError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(InvAutoError):
    """An operation was called in a state that violates its contract."""


class ParameterError(InvAutoError):
    """An invalid hyperparameter value was supplied."""


class ConstructionError(InvAutoError):
    """A network specification cannot be realized."""


class DegenerateRowError(InvAutoError):
    """A matrix statistic is undefined because of all-zero rows."""

    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"zero rows at indices {self.indices}")


class FormatError(InvAutoError):
    """A file does not conform to its declared format."""


class CheckpointError(InvAutoError):
    """A checkpoint file is malformed or does not match the model."""


class ConfigError(InvAutoError):
    """An invalid run configuration was supplied."""
