"""Exception hierarchy shared by every module of the package."""


class AoIIError(Exception):
    """Base class for all errors raised by :mod:`aoii`."""


class RangeError(AoIIError, ValueError):
    """A probability or rate lies outside its admissible interval."""


class AdmissibilityViolation(AoIIError, ValueError):
    """Transmitting does not help: ``a >= beta``."""


class ParamError(AoIIError, ValueError):
    """Invalid parameters for a penalty-function constructor."""


class NumericalError(AoIIError):
    """Base for numerical failures (CLI exit code 2)."""


class DivergenceSuspected(NumericalError):
    """A weighted tail sum of the penalty failed to converge."""


class SearchOverflow(NumericalError):
    """Interval doubling in the threshold search exceeded its hard cap."""


class InfeasibleTolerance(NumericalError):
    """The multiplier bisection could not bracket the rate budget."""


class NoConvergence(NumericalError):
    """Relative value iteration did not reach its tolerance."""


class ConfigError(AoIIError, ValueError):
    """Malformed or inconsistent experiment configuration."""
