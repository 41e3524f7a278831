"""Exception types shared across the pipeline."""


class MalcnnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MalcnnError, ValueError):
    """A config value violates its documented constraints."""


class ValidationError(MalcnnError, ValueError):
    """Input data violates a contract (shape, range, labels...)."""


class CapacityError(MalcnnError, ValueError):
    """More unique processes in a trace than the sample matrix can hold."""


class TraceParseError(MalcnnError, ValueError):
    """A persisted trace file is malformed.

    ``line`` is the 1-based line number in ``snapshots.csv`` when the
    problem is attributable to a specific row, else ``None``.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeMismatchError(MalcnnError, ValueError):
    """A tensor does not have the shape a layer expects."""


class ChannelReplicationError(MalcnnError, ValueError):
    """Channel replication applied to an already 3-channel sample."""


class CheckpointError(MalcnnError, ValueError):
    """A checkpoint file is unreadable or does not match its model."""


class NonFiniteGradientError(MalcnnError, RuntimeError):
    """A gradient tensor contains NaN or infinity."""

    def __init__(self, tensor_name):
        super().__init__(f"non-finite gradient in parameter tensor {tensor_name!r}")
        self.tensor_name = tensor_name


class TrainingDivergedError(MalcnnError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch, batch):
        super().__init__(f"non-finite training loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class UndefinedMetricError(MalcnnError, ValueError):
    """A metric cannot be computed from the given inputs (e.g. single-class AUC)."""
