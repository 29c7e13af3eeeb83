"""Exception taxonomy shared by the engine, the harness, and the CLI.

The CLI maps ConfigError to exit status 2 and DataError (including
FormatError and TrackingError) to exit status 3.
"""


class CorrtrackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CorrtrackError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(CorrtrackError):
    """A configuration value is missing, inconsistent, or unusable."""


class DataError(CorrtrackError):
    """An input file or stream holds values we cannot use."""


class FormatError(DataError):
    """A binary or text file does not match its declared format."""


class TrackingError(DataError):
    """Tracking failed mid-sequence; carries the offending frame index."""

    def __init__(self, message: str, frame_index: int):
        super().__init__(f"frame {frame_index}: {message}")
        self.frame_index = frame_index
