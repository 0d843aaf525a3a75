"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent; nothing is ever broadcast."""


class ModeError(ValueError):
    """A tensor mode index is out of range."""


class ConfigError(ValueError):
    """A configuration value is out of its documented domain."""


class UnsupportedDecompositionError(TypeError):
    """The operation is defined only for a different decomposition type."""


class EnumerationLimitError(ValueError):
    """Exact mask enumeration was requested for an infeasibly large rank."""


class DivergedError(RuntimeError):
    """Training produced a non-finite or runaway objective."""

    def __init__(self, epoch, value):
        super().__init__(f"objective diverged at epoch {epoch} (value {value!r})")
        self.epoch = epoch
        self.value = value
