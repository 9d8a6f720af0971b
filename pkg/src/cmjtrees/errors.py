"""Exception hierarchy shared by every module of the package."""


class CMJError(Exception):
    """Base class for all package errors."""


class InvalidParams(CMJError, ValueError):
    """A family description violates one of its validity constraints."""


class DomainError(CMJError, ValueError):
    """A transform was evaluated outside its domain of finiteness."""


class NoBracket(CMJError):
    """The Malthusian equation has no root on the searched range."""


class Subcritical(CMJError):
    """The thinned (clonal) process has no positive Malthusian parameter."""


class CapExceeded(CMJError):
    """A simulation reached its node-count safety cap."""


class NonTerminating(CMJError):
    """Extinction restarts exceeded the configured bound."""


class NotRecorded(CMJError):
    """A full-tree quantity was requested from a streaming run."""


class GridError(CMJError, ValueError):
    """Invalid discretisation for the renewal solver."""


class InsufficientData(CMJError):
    """Not enough experiment data for the requested fit."""


class ConfigError(CMJError):
    """An experiment configuration file could not be used."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ExperimentFailed(CMJError):
    """More than the tolerated share of replicates failed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
