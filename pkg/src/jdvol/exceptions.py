class JDVolError(Exception):
    """Base class for package errors."""


class SimulationError(JDVolError):
    """A simulated state became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DataError(JDVolError, ValueError):
    """Input data could not be parsed or validated."""


class NumericalError(JDVolError, ArithmeticError):
    """A quantity is undefined at the requested point (e.g. no local time)."""
