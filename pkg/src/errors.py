"""Exception hierarchy shared by every package module."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_INTERRUPTED = 5


class CstError(Exception):
    """Base class for all errors raised by the set-learning engine."""

    exit_code = 1


class ConfigError(CstError):
    exit_code = EXIT_CONFIG


class DataError(CstError):
    exit_code = EXIT_DATA


class ShapeError(DataError):
    """Tensor shapes do not fit the operation."""


class SpecError(CstError):
    """A model specification cannot be composed."""

    exit_code = EXIT_CONFIG

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"layer {index}: {message}"
        super().__init__(message)


class TapeError(CstError):
    """Misuse of the differentiation tape."""


class NumericError(CstError):
    exit_code = EXIT_DIVERGENCE


class DivergenceError(NumericError):
    def __init__(self, epoch, batch, message="loss is not finite"):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} at epoch {epoch}, batch {batch}")


class CheckpointError(DataError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass
