"""Exception types. CLI exit codes: ``DataError`` -> 1, ``NumericalError`` -> 2."""


class DataError(ValueError):
    """Malformed, missing or inconsistent input data."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-PD factor, solver breakdown)."""


class InsufficientExceedances(ValueError):
    """Too few threshold exceedances to fit a GPD tail."""

    def __init__(self, count, floor):
        super().__init__(f"{count} exceedances, need at least {floor}")
        self.count = count
        self.floor = floor


class DegenerateSample(ValueError):
    """Sample with zero spread; no marginal can be fitted."""
