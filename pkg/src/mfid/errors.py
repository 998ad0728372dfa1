"""Exception types raised across the package."""


class MfidError(Exception):
    pass


class ConfigError(MfidError, ValueError):
    """Bad configuration: unknown names, malformed text, violated contracts."""

    def __init__(self, message, *, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key


class DomainError(MfidError, ValueError):
    """A scalar function was evaluated outside the set where it is defined."""


class StepSizeError(MfidError, ValueError):
    """Explicit step violates the stability bound."""


class SolverError(MfidError, RuntimeError):
    """An iterative solve failed. ``state`` holds the last iterate when available."""

    def __init__(self, message, *, state=None, data=None):
        super().__init__(message)
        self.state = state
        self.data = data
