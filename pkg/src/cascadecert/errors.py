"""Exception hierarchy shared by every module."""


class CascadeCertError(Exception):
    """Base class for all toolkit errors."""


class InputError(CascadeCertError, ValueError):
    """Malformed arguments: dimension mismatch, bad precondition, bad axis."""


class ConstructionError(InputError):
    """An object could not be built (non-PD metric, ill-formed cascade)."""


class ResourceError(CascadeCertError):
    """A requested discretization would exceed the configured size limits."""


class NumericError(CascadeCertError, ArithmeticError):
    """Non-finite values or division by zero during evaluation."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DivergenceError(NumericError):
    """Integration left the admissible state range or the step size underflowed."""

    def __init__(self, message, last_time, point=None):
        super().__init__(message, point)
        self.last_time = last_time


class ConfigError(InputError):
    """Schema violation in a run configuration; ``path`` is a JSONPath-like key path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
