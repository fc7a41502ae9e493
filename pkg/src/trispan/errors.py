"""Exception types shared across the package."""


class TrispanError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(TrispanError):
    """Tensor shapes do not satisfy an operation's contract."""


class ConfigError(TrispanError):
    """Invalid configuration value (dims, head counts, kernel sizes, ...)."""


class NumericsError(TrispanError):
    """A forward computation produced NaN or Inf."""


class ContractError(TrispanError):
    """An API precondition was violated (non-scalar backward, empty tape, ...)."""


class ValidationError(TrispanError):
    """An input, record, or dataset file violates a declared invariant."""


class MappingError(TrispanError):
    """A time/token conversion was requested on an unusable span map."""


class CheckpointError(TrispanError):
    """Checkpoint file is unreadable, wrong version, or shape-incompatible."""
