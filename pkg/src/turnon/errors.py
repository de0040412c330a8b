"""Exception types shared across the toolkit."""


class ConfigurationError(ValueError):
    """Raised when supplied device data or circuit configuration is invalid."""


class InputError(ValueError):
    """Raised when an operation receives an out-of-domain argument (NaN, negative voltage, ...)."""


class IntegrationError(RuntimeError):
    """Raised when the time integrator cannot advance; carries the last good state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class ClassificationError(ValueError):
    """Raised when a switching scenario cannot be identified unambiguously."""


class NotSwitchedError(ValueError):
    """Raised when a trace contains no qualifying turn-on event."""
