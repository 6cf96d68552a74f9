"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class TLError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(TLError):
    """Bad configuration, bad arguments, or a missing upstream artifact."""


class ShapeError(TLError, ValueError):
    """Array or layer dimensions do not line up."""


class DataError(TLError):
    """Input files that cannot be parsed or do not match their schema."""


class SchemaError(DataError):
    pass


class MalformedRowError(DataError):
    def __init__(self, path, row, message):
        self.path = path
        self.row = row
        super().__init__(f"{path}: row {row}: {message}")


class StateError(DataError):
    """A persisted preprocessor state that cannot be used."""


class StateCorruptError(StateError):
    pass


class StateVersionError(StateError):
    pass


class LeakageError(TLError):
    """A fit was attempted on a split that is not a training split."""


class CheckpointError(TLError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointDigestError(CheckpointError):
    pass


class SpecMismatchError(CheckpointError):
    pass


class NumericError(TLError):
    """Training produced a non-finite loss."""


class BackwardBeforeForwardError(TLError, RuntimeError):
    def __init__(self, layer):
        super().__init__(f"{layer}: backward before forward (no training-mode cache)")
