"""Exception hierarchy shared across the package.

Exit codes used by the CLI: config errors map to 2, data errors to 3,
numeric failures (NaN/Inf) to 4.
"""


class AudioLrpError(Exception):
    exit_code = 1


class ConfigError(AudioLrpError):
    """Invalid configuration, architecture, or argument."""

    exit_code = 2


class ShapeError(ConfigError):
    """Tensor shapes do not chain or do not match a contract."""


class DataError(AudioLrpError):
    """Malformed or unusable input data (files, datasets, checkpoints)."""

    exit_code = 3


class CheckpointError(DataError):
    """Corrupt or truncated checkpoint file."""


class ArchitectureMismatchError(CheckpointError):
    """Checkpoint architecture does not match the expected model."""


class NumericError(AudioLrpError):
    """Non-finite values produced where finite ones are required."""

    exit_code = 4
