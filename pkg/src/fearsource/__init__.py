"""Survey analytics for fear responses by information source."""

__version__ = "0.1.0"
