"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class ScoringError(ValueError):
    """A similarity score could not be computed (e.g. zero-norm vector)."""


class DataFormatError(ValueError):
    """A dataset or checkpoint file is malformed."""
