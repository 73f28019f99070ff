"""Exception types raised across the package."""


class InvalidStateError(RuntimeError):
    """An object is in a state the requested operation cannot accept."""


class ConfigError(ValueError):
    """A configuration file or parameter set is incomplete or inconsistent."""


class ConvergenceError(RuntimeError):
    """An iterative procedure stopped before meeting its tolerance."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
