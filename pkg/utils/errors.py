"""Exception hierarchy shared by every stage of the pipeline.

``InputError`` covers anything the operator can fix (bad files, bad flags) and
maps to exit code 2. ``InvariantError`` signals a broken internal contract and
maps to exit code 3.
"""


class CaresError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 3


class InputError(CaresError):
    """A user or input problem."""

    exit_code = 2


class ConfigError(InputError):
    """Invalid configuration value or config file."""


class DatasetError(InputError):
    """Unreadable, malformed or empty dataset."""


class GraphFormatError(InputError):
    """Corrupt or incompatible graph file."""


class CheckpointError(InputError):
    """Corrupt, truncated or mismatched checkpoint."""


class InvariantError(CaresError):
    """An internal invariant was violated."""

    exit_code = 3


class ShapeError(InvariantError):
    """Incompatible tensor shapes."""


class NumericalError(InvariantError):
    """NaN/Inf or a degenerate value where one is not allowed."""
