"""Exception and warning types raised across the package."""


class QconvError(Exception):
    """Base class for all package errors."""


class InvalidDistribution(QconvError, ValueError):
    pass


class NonStochasticRow(QconvError, ValueError):
    pass


class BadGamma(QconvError, ValueError):
    pass


class IndexOutOfRange(QconvError, IndexError):
    pass


class DimensionMismatch(QconvError, ValueError):
    pass


class NonConvergence(QconvError, RuntimeError):
    pass


class NonFiniteValue(QconvError, FloatingPointError):
    """A learner produced a non-finite Q entry.

    ``diagnostics`` holds whatever was recorded before the abort.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class BadSchedule(QconvError, ValueError):
    pass


class NonVanishingPerturbation(QconvError, ValueError):
    pass


class UnsupportedTransition(QconvError, ValueError):
    pass


class OutOfDomain(QconvError, ValueError):
    pass


class ConfigError(QconvError, ValueError):
    pass


class SchemaMismatch(QconvError, ValueError):
    pass


class NonSmoothAtPoint(UserWarning):
    """A ReLU-type pre-activation sat on its kink; the probe state was jittered."""
