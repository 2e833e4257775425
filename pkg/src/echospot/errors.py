"""Exception types shared by all echospot modules."""


class EchoSpotError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(EchoSpotError, ValueError):
    """An argument is outside its valid range or used in an invalid way."""


class DimensionError(EchoSpotError, ValueError):
    """Array shapes, lengths or sample rates do not match."""


class GeometryError(ParameterError):
    """A source or receiver position is outside the room."""


class DegenerateSignalError(EchoSpotError, ValueError):
    """An operation received an all-zero or otherwise unusable signal."""


class NumericalError(EchoSpotError, ArithmeticError):
    """A solver encountered non-finite values; carries the iteration index."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(EchoSpotError, ValueError):
    """A scenario configuration failed validation."""


class MissingArtifactError(EchoSpotError, FileNotFoundError):
    """A pipeline stage requires an artifact an earlier stage has not produced."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
