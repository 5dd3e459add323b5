"""Exception types raised by the package."""


class TemReconError(Exception):
    """Base class for all domain errors."""


class InvalidArgument(TemReconError, ValueError):
    pass


class OverloadError(TemReconError):
    """Input amplitude too large for the modulator to keep switching."""


class NumericError(TemReconError, ArithmeticError):
    pass


class QuantizationCollision(TemReconError):
    """Two switching instants rounded onto the same time grid point."""


class CalibrationError(TemReconError):
    pass


class TableRangeError(TemReconError, LookupError):
    """A lag fell outside the tabulated range (or off the table grid)."""


class DivergenceError(NumericError):
    pass


class DegenerateError(NumericError):
    pass


class ExperimentAborted(TemReconError):
    """Too many trials of an ensemble failed."""
