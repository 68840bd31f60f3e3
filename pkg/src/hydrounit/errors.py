"""Exception hierarchy.

:class:`ConfigError` subclasses map to CLI exit code 1 and
:class:`NumericError` subclasses to exit code 2.
"""
from __future__ import annotations


class HydroUnitError(Exception):
    """Base class for all package errors."""


class ConfigError(HydroUnitError, ValueError):
    """Bad user input: malformed config, unknown scenario, invalid grid."""


class ParameterError(ConfigError):
    """Invalid or inconsistent parameter value.

    Attributes
    ----------
    key : str
        Dotted path of the offending field, e.g. ``"gen.x_d"``.
    """

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericError(HydroUnitError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class SingularSystemError(NumericError):
    pass


class DomainError(NumericError):
    """Argument outside the domain of a model expression (e.g. ``mu <= 0``)."""


class RefinementError(NumericError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class SmoothnessError(NumericError):
    """A finite-difference probe crossed a piecewise boundary of the model."""


class DivergenceError(NumericError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g} s")
        self.time = time


class InsufficientDataError(NumericError):
    """Too few oscillation peaks to support a limit-cycle claim."""


class OverflowRiskError(NumericError):
    pass
