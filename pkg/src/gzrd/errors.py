"""Exception hierarchy shared by every stage of the pipeline."""


class GzrdError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(GzrdError, ValueError):
    exit_code = 2


class DimensionError(GzrdError, ValueError):
    exit_code = 3


class DataError(GzrdError, ValueError):
    exit_code = 3


class ModalityError(DataError):
    pass


class CheckpointError(DataError):
    pass


class StreamGapError(DataError):
    def __init__(self, message, timestamp):
        super().__init__(message)
        self.timestamp = timestamp


class BehindCameraError(GzrdError, ValueError):
    exit_code = 3


class UndefinedMetricError(GzrdError, ValueError):
    exit_code = 3


class NumericError(GzrdError, FloatingPointError):
    exit_code = 4
