"""Exception types raised across the package."""


class GTCNNError(Exception):
    """Base class for package errors."""


class SizeMismatchError(GTCNNError, ValueError):
    """Operand shapes are incompatible."""


class InvalidSizeError(GTCNNError, ValueError):
    """A size argument is out of its valid range."""


class SamplingError(GTCNNError, RuntimeError):
    """Random construction failed within its retry budget."""


class ConfigError(GTCNNError, ValueError):
    """Invalid or unknown configuration keys/values."""


class DataError(GTCNNError, ValueError):
    """Malformed or incompatible data files."""


class CheckpointError(GTCNNError, ValueError):
    """Checkpoint file is corrupt or has an unsupported version."""


class UndefinedMetricError(GTCNNError, ValueError):
    """A metric is not defined for the given reference values."""
