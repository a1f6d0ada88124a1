"""Exception hierarchy. CLI exit codes hang off these: config/usage errors
exit 1, data errors exit 2, judge-endpoint failures exit 3."""


class StreamwardenError(Exception):
    """Base for all package errors."""

    exit_code = 1


class ConfigError(StreamwardenError):
    """Invalid configuration or usage."""

    exit_code = 1


class DataError(StreamwardenError):
    """Malformed or incompatible trace data."""

    exit_code = 2


class TraceParseError(DataError):
    """Malformed trace file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MonitorError(DataError):
    """A monitor cannot run on the given trace (missing fields, dim mismatch)."""


class JudgeError(StreamwardenError):
    """Judge endpoint transport failure after retries."""

    exit_code = 3
