"""Exception hierarchy shared by the library and the CLI."""


class AftBoostError(Exception):
    """Base class for all errors raised by aftboost."""


class InvalidLabelError(AftBoostError, ValueError):
    """A label range violates ``0 <= lower <= upper`` or is otherwise unusable."""


class DataError(AftBoostError, ValueError):
    """Malformed input data (CSV cells, shapes, widths)."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(AftBoostError, ValueError):
    """Invalid parameters, search spaces or option documents."""


class ModelFormatError(AftBoostError, ValueError):
    """A serialized model document cannot be parsed or has the wrong version."""


class MetricError(AftBoostError, ValueError):
    """A metric is undefined for the given inputs."""
