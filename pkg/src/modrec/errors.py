"""Exception types raised across the package."""


class ModrecError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ModrecError, ValueError):
    """A configuration value is invalid.

    ``field`` names the offending setting when it is known, so the CLI can
    report a field-level message.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DimensionError(ModrecError, ValueError):
    """Operand shapes are incompatible."""


class DataError(ModrecError, ValueError):
    """Input data violates a contract (bad label, corrupt file, ...)."""


class ContractError(ModrecError, RuntimeError):
    """An API was used out of order or with an unsupported argument."""


class TrainingDiverged(ModrecError, RuntimeError):
    """The training loss became non-finite."""
