"""Exception hierarchy shared by all modules."""


class NetDisturbError(Exception):
    """Base class for every error raised by this package."""


class DomainError(NetDisturbError, ValueError):
    """rho lies outside the admissible interval of the weight matrix."""


class DesignDegeneracyError(NetDisturbError, ValueError):
    """A design matrix (X or K_rho X) is numerically rank deficient."""


class DegenerateModelError(NetDisturbError, ArithmeticError):
    """K_rho or a derived matrix is numerically singular."""


class DegenerateDataError(NetDisturbError, ValueError):
    """The data are fitted exactly, so the profile objective is undefined."""


class ConvergenceError(NetDisturbError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class FormatError(NetDisturbError, ValueError):
    """Malformed input file. The message names the file and line."""

    def __init__(self, path, lineno, expected, got=None):
        self.path = str(path)
        self.lineno = lineno
        self.expected = expected
        msg = f"{self.path}:{lineno}: expected {expected}"
        if got is not None:
            msg += f", got {got!r}"
        super().__init__(msg)
