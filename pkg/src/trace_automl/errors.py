"""Exception hierarchy shared by every stage."""


class TraceAutoMLError(Exception):
    """Base class for all package errors."""


class ConfigError(TraceAutoMLError, ValueError):
    """Invalid user configuration (bad column name, infeasible spec, k > N...)."""


class LogParseError(TraceAutoMLError, ValueError):
    """Malformed event log input."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyLogError(LogParseError):
    def __init__(self, message="empty log"):
        super().__init__(message)


class SchemaMismatchError(TraceAutoMLError, ValueError):
    """Artifacts written under incompatible schemas."""
