# this_file: src/hiergap/errors.py
"""Exception hierarchy for hiergap.

Every error carries the process exit code the CLI uses when it reaches the top level.
"""


class HierGapError(Exception):
    """Base class for all hiergap errors."""

    exit_code: int = 1


class ConfigError(HierGapError):
    """Invalid configuration or parameters."""

    exit_code = 2


class ParameterError(ConfigError):
    """A model parameter violates an operation's precondition."""


class RangeError(ConfigError):
    """A scale or index lies outside its admissible range."""


class NumericalError(HierGapError):
    """A numerical procedure failed to produce a trustworthy result."""

    exit_code = 3


class QuadratureError(NumericalError):
    """Quadrature order escalation did not converge."""


class ResolutionError(NumericalError):
    """A grid or spectrum is too coarse for the requested quantity."""


class TruncationError(NumericalError):
    """A truncated sum leaves too much mass outside the retained terms."""


class InstabilityError(NumericalError):
    """A time integrator diverged."""


class TuningError(NumericalError):
    """Critical-point tuning could not bracket or converge."""


class CertificateInvalidError(NumericalError):
    """A Brascamp-Lieb recursion step received epsilon >= 1."""


class CapacityError(HierGapError):
    """The requested problem is too large for dense assembly."""

    exit_code = 4
