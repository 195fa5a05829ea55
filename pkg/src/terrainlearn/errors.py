"""Shared exception types."""


class ValidationError(ValueError):
    """A config, argument, or input failed validation."""


class SessionFormatError(Exception):
    """A session file could not be parsed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
