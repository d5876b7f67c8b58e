"""Exception types shared across the package."""


class FearsourceError(Exception):
    """Base class for all package errors."""


class ParseError(FearsourceError):
    """Malformed input file. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FearsourceError):
    """Input violates a domain invariant (bad code, duplicate key, ...)."""


class ConfigError(FearsourceError):
    """Invalid or inconsistent configuration value."""


class AlignmentError(FearsourceError):
    """Series that must share a date axis do not."""


class InsufficientDataError(FearsourceError):
    """Not enough observations to run the requested computation."""


class DegenerateSampleError(FearsourceError):
    """Sample has no variation where variation is required."""
