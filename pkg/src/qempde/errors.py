"""Exception hierarchy shared by every module."""

from __future__ import annotations


class QempdeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QempdeError, ValueError):
    """Invalid sizes, indices, strengths or option values."""


class ValidationError(QempdeError, ValueError):
    """A numerical object violates a required invariant (completeness, purity, ...)."""


class SingularChannelError(QempdeError, ValueError):
    """A channel or matrix that must be inverted is singular."""


class InfeasibleError(QempdeError, RuntimeError):
    """A requested estimate would need an impractical sampling budget."""


class FitError(QempdeError, ValueError):
    """Not enough usable data points for a regression."""


class TrainingAborted(QempdeError, RuntimeError):
    """Training produced a non-finite loss.

    The partial loss history is kept on ``trace`` for diagnostics.
    """

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])
