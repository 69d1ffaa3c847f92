"""Exception hierarchy shared by the FourNet modules.

Each class carries the process exit code the CLI maps it to: 2 for invalid input
(configuration, parameters, stale artifacts) and 3 for numeric failures.
"""

from typing import Any, Optional

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class FourNetError(Exception):
    """Base class for every error raised by the library."""

    exit_code: int = EXIT_NUMERIC


class ParameterError(FourNetError, ValueError):
    """A model, transform or algorithm parameter violates its invariants."""

    exit_code = EXIT_CONFIG


class ConfigError(FourNetError):
    """A run configuration cannot be loaded or is inconsistent."""

    exit_code = EXIT_CONFIG


class StaleThetaError(FourNetError):
    """A parameter document does not belong to the configured model or transform."""

    exit_code = EXIT_CONFIG


class EvaluationError(FourNetError):
    """A closed form cannot be evaluated (degenerate branch, singular covariance)."""

    def __init__(self, message: str, eta: Any = None):
        super().__init__(message if eta is None else f"{message} (eta={eta!r})")
        self.eta = eta


class IntegrationError(FourNetError):
    """The integrand returned a non-finite value."""

    def __init__(self, message: str, abscissa: Optional[float] = None):
        super().__init__(message if abscissa is None else f"{message} (x={abscissa!r})")
        self.abscissa = abscissa


class NonIntegrableTailError(FourNetError):
    """The Fourier tails do not fall below tolerance before the truncation cap."""


class RangeError(FourNetError):
    """Cumulant estimates needed for a truncation range are not finite."""


class DomainError(FourNetError, ValueError):
    """An evaluation point lies outside the supported range."""


class TrainingAbortedError(FourNetError):
    """Training produced a non-finite gradient or loss.

    ``last_theta`` holds the last parameters whose loss was finite and ``history``
    the epochs completed before the abort.
    """

    def __init__(self, message: str, last_theta: Any = None, history: Optional[list] = None):
        super().__init__(message)
        self.last_theta = last_theta
        self.history = history or []
