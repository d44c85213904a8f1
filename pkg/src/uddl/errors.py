"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to:
2 = malformed file, 3 = shape/consistency, 4 = numeric failure,
5 = sampling/protocol.
"""


class UddlError(Exception):
    exit_code = 1


class FormatError(UddlError):
    """A file does not follow its binary or text container format."""

    exit_code = 2


class ShapeError(UddlError):
    """Dimensions or index structures of two inputs do not agree."""

    exit_code = 3


class ConsistencyError(ShapeError):
    """An index (image range, coupling column) points outside its matrix."""


class ConfigError(ShapeError):
    """A configuration value is out of its admissible range."""


class NumericError(UddlError):
    """A numerical routine produced or received non-finite/invalid values."""

    exit_code = 4


class SamplingError(UddlError):
    """The sampling protocol cannot be satisfied by the given image set."""

    exit_code = 5
