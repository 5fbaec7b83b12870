"""Exception types shared across the package."""


class XmodalError(Exception):
    """Base class for all package errors."""


class DimensionError(XmodalError, ValueError):
    """Shapes of two operands are incompatible."""

    @classmethod
    def mismatch(cls, op: str, a_shape, b_shape) -> "DimensionError":
        return cls(f"{op}: incompatible shapes {tuple(a_shape)} and {tuple(b_shape)}")


class ContractError(XmodalError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(XmodalError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DataFormatError(XmodalError, ValueError):
    """Malformed dataset or checkpoint file; carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IngestionError(XmodalError, ValueError):
    """Input sample does not match the configured schema."""


class TrainingDivergedError(XmodalError, RuntimeError):
    """Training produced a non-finite loss; names the first bad gradient."""
