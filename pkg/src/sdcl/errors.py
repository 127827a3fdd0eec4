"""Exception types shared across the library."""


class SdclError(Exception):
    """Base class for library errors."""


class ShapeError(SdclError):
    """An operand's shape does not fit the operation."""


class ConfigError(SdclError):
    """A configuration value is invalid. Carries the failing key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ContractError(SdclError):
    """An API precondition was violated by the caller."""


class NumericError(SdclError):
    """A computation produced NaN or Inf."""


class DomainError(SdclError):
    """A query refers to an impossible or unsupported event."""
