"""Exception hierarchy shared across the package."""


class RaTouchError(Exception):
    """Base class for all package errors."""


class DimensionError(RaTouchError, ValueError):
    pass


class ConfigError(RaTouchError, ValueError):
    pass


class NumericalError(RaTouchError, FloatingPointError):
    """A kernel produced NaN or Inf."""


class GraphStateError(RaTouchError, RuntimeError):
    pass


class DegenerateInputError(RaTouchError, ValueError):
    pass


class ValidationError(RaTouchError, ValueError):
    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class CaptionerTransportError(RaTouchError, OSError):
    """Retryable failure talking to a captioner backend."""


class FormatError(RaTouchError, ValueError):
    def __init__(self, message, offset=None, record=None):
        detail = message
        if record is not None:
            detail += f" (record {record})"
        if offset is not None:
            detail += f" at byte offset {offset}"
        super().__init__(detail)
        self.offset = offset
        self.record = record
