class DimensionError(ValueError):
    """Operand shapes do not conform."""


class UsageError(ValueError):
    """An operation was called outside its contract."""


class NumericalError(ArithmeticError):
    """A loss or gradient became NaN/Inf during training."""
