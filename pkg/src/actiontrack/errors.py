"""Exception hierarchy shared by all modules."""


class ActionTrackError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ActionTrackError, ValueError):
    """Invalid arguments or preconditions not met."""


class ParseError(ActionTrackError, ValueError):
    """A stream or file record could not be parsed.

    ``location`` names the file and/or line number of the offending record.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class SequencingError(ActionTrackError):
    """Frame indices or timestamps went backwards."""


class NumericError(ActionTrackError, ArithmeticError):
    """An iterative numeric procedure failed to converge."""

    def __init__(self, message, pixel=None):
        self.pixel = pixel
        super().__init__(message)


class ConvergenceError(ActionTrackError):
    """Least-squares adjustment diverged."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (last rms residual {residual:.6g})")


class CalibrationDegenerateError(ActionTrackError):
    """The observation set does not constrain the calibration."""
