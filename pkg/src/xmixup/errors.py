"""Exception types shared across the package.

Argument-validation failures raise plain ValueError; lookups of missing
plan entries raise KeyError. Everything else funnels through the classes
below so the CLI can map failures to stable exit codes.
"""


class DataError(Exception):
    """A dataset, artifact, or subset is structurally unusable."""


class ParseError(DataError):
    """A persisted artifact is malformed; carries a 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(Exception):
    """A computation produced or received non-finite or degenerate values."""


class ConfigError(Exception):
    """An experiment configuration or strategy parameter set is invalid."""
