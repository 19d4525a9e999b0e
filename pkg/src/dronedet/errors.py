"""Exception hierarchy shared by all modules."""


class DetectorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DetectorError):
    """Inconsistent layer or kernel parameters."""


class ParseError(DetectorError):
    """Malformed text input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(DetectorError):
    """Tensor or layer shapes that cannot be connected."""


class ValidationError(DetectorError):
    """A value outside its documented domain."""


class WeightsError(DetectorError):
    """Binary weights stream does not match the network definition."""
