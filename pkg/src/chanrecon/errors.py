"""Exception hierarchy.

Every error the package raises deliberately derives from ChanreconError and
carries the CLI exit code of its category: 2 config, 3 data, 4 training,
5 evaluation.
"""


class ChanreconError(Exception):
    exit_code = 1


class ConfigError(ChanreconError):
    exit_code = 2


class ScheduleError(ConfigError):
    """Invalid variance-schedule parameters."""


class ArgumentError(ConfigError):
    """An operation was called with out-of-contract arguments."""


class DataError(ChanreconError):
    exit_code = 3


class DecodeError(DataError):
    """File exists but cannot be decoded as an image."""


class ChannelCountError(DataError):
    """Decoded image is not a plain 3-channel RGB image."""


class DimensionError(DataError):
    """Tensor shapes violate an operation's contract."""


class ManifestError(DataError):
    """Dataset tree or manifest violates the layout contract."""


class CheckpointError(DataError):
    """Checkpoint file is incompatible or bound to a different schedule."""


class CacheError(DataError):
    """A required cache entry is missing or unreadable."""


class TrainingError(ChanreconError):
    exit_code = 4

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class EvaluationError(ChanreconError):
    exit_code = 5


class MetricUndefinedError(EvaluationError):
    """Metric is undefined for the given label composition."""


class AuditError(EvaluationError):
    """Artifact audit found files not reachable from the report."""
