"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of two operands do not line up."""


class FormatError(ValueError):
    """A binary or JSON artifact violates its file format.

    ``offset`` is the byte offset at which the problem was detected,
    when one is meaningful.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class OracleError(RuntimeError):
    """A verification oracle could not run (e.g. non-deterministic loss)."""


class StateError(RuntimeError):
    """A cached trace or optimizer state does not belong to these parameters."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


class ValidationError(ValueError):
    """A run configuration or CLI input failed validation before any work."""
