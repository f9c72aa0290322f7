"""Exceptions raised by the pistonlab pipelines."""


class PistonLabError(Exception):
    """Base class for all pistonlab errors."""


class InvalidInputError(PistonLabError, ValueError):
    """Raised when a geometry, ceiling or parameter is out of range."""


class ConfigurationError(InvalidInputError):
    """Raised for unknown or invalid settings keys and values."""


class NumericalFailureError(PistonLabError, RuntimeError):
    """Raised when a root search does not converge inside its bracket."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class InsufficientSpectrumError(PistonLabError, RuntimeError):
    """Raised when a spectrum is too short to bound the truncated tail."""

    def __init__(self, message, required_omega_max=None):
        super().__init__(message)
        self.required_omega_max = required_omega_max


class ResourceLimitError(PistonLabError, RuntimeError):
    """Raised when an enumeration would exceed the configured mode budget."""

    def __init__(self, message, estimated_modes=None):
        super().__init__(message)
        self.estimated_modes = estimated_modes


class UnreliableFitError(PistonLabError, RuntimeError):
    """Raised when the finite-part fit is ill-conditioned."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InstabilityError(UnreliableFitError):
    """Raised when the finite part moves when the widest cutoff is dropped."""
