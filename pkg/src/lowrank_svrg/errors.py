class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class DivergenceError(NumericalError):
    """Raised when a solver iterate blows up.

    ``stage`` and ``step`` locate the offending update (``step`` is None when
    the failure happened outside an inner loop).
    """

    def __init__(self, message, stage=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.step = step
