"""Exception types raised across the package."""


class QPDError(Exception):
    pass


class NodeError(QPDError, ArithmeticError):
    """Amplitude vanishes where a phase gradient or quantum potential is needed."""


class DomainError(QPDError, ValueError):
    pass


class StepFailure(QPDError, RuntimeError):
    """Adaptive step size underflowed during integration."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class NonNormalizableError(QPDError, ValueError):
    pass


class ParseError(QPDError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(QPDError, ValueError):
    pass
