"""Exception types raised across the package."""


class ToprankLabError(Exception):
    """Base class for all package errors."""


class EnumerationTooLarge(ToprankLabError):
    """An exhaustive enumeration would exceed the configured size limit."""


class CycleDetected(ToprankLabError):
    """The relation graph became (or would become) cyclic."""

    def __init__(self, message, *, episode=None, round_index=None, edges=None):
        super().__init__(message)
        self.episode = episode
        self.round_index = round_index
        self.edges = edges


class QuadratureFailure(ToprankLabError):
    """Numerical integration did not reach the requested tolerance."""


class BracketFailure(ToprankLabError):
    """Root bracketing exceeded the supported argument range."""


class DomainError(ToprankLabError, ValueError):
    """Arguments outside the domain where a formula is defined."""


class DegenerateConditioning(ToprankLabError):
    """A conditional estimate was requested but the conditioning event never occurred."""


class ConfigError(ToprankLabError, ValueError):
    """Invalid or incomplete experiment configuration."""
