class DimensionError(ValueError):
    """Operand shapes do not fit together."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class LeakageError(RuntimeError):
    """A train/test split shares patients."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss) or cannot proceed."""


class FoldError(RuntimeError):
    """A cross-validation fold failed; ``fold`` holds its index."""

    def __init__(self, fold: int, cause: BaseException):
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.cause = cause
