"""Exception hierarchy.

Everything raised on purpose by this package derives from `ProcrusteanError`
so the command line can map it to a stable exit code.
"""


class ProcrusteanError(Exception):
    """Base class for errors raised by this package."""


class NumericalError(ProcrusteanError):
    """A computation could not be carried out numerically."""


class DegenerateStateError(NumericalError, ValueError):
    """The amplitude matrix is identically zero."""


class AnnihilatedStateError(NumericalError):
    """A filter removed every surviving amplitude."""


class InfeasibleTargetError(NumericalError):
    """The target populates a mode the source state does not."""


class InfeasibleInversionError(NumericalError):
    """A filter blocks a mode that the target requires."""


class NotCorrelatedError(NumericalError, ValueError):
    """A diagonal (perfectly correlated) state was required."""


class SingularConfigurationError(NumericalError):
    """The complex beam parameter degenerated during propagation."""


class IntegrationError(NumericalError):
    """Radial quadrature did not reach the requested tolerance."""


class UndefinedQuantityError(NumericalError, ValueError):
    """A ratio was requested with a zero denominator."""


class UnsupportedDimensionError(ProcrusteanError, ValueError):
    """The operation is only defined for a specific dimension."""


class ConfigError(ProcrusteanError, ValueError):
    """An experiment configuration failed validation."""
