"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3 and I/O failures with 4.
"""


class DarkStatesError(Exception):
    """Base class for all package errors."""


class ConfigError(DarkStatesError, ValueError):
    """Invalid scenario or parameter configuration.

    ``path`` names the offending field (e.g. ``ensemble.fwhm``), ``line`` its
    line in the scenario file and ``source`` the file, when known.
    """

    def __init__(self, message, path=None, line=None, source=None):
        self.message = message
        self.path = path
        self.line = line
        self.source = source
        super().__init__(message)

    def __str__(self):
        where = ""
        if self.source:
            where += f"{self.source}: "
        if self.path:
            where += f"{self.path}: "
        if self.line is not None:
            where += f"(line {self.line}) "
        return where + self.message


class NumericalError(DarkStatesError, ArithmeticError):
    """A numerical procedure failed or produced unusable output."""


class StepSizeError(NumericalError):
    """Requested time step is too coarse for the fastest rate in the problem."""


class DivergenceError(NumericalError):
    """NaN/overflow or unbounded growth detected during a solve."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        super().__init__(message)


class ConvergenceError(NumericalError):
    """Iterative solver or fit did not converge."""


class FitError(NumericalError):
    """A fit could not be performed on the supplied data."""


class OracleCapError(DarkStatesError, ValueError):
    """Problem too large for a dense reference computation."""
