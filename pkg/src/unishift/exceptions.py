"""Exception types shared across the package."""


class UnishiftError(Exception):
    """Base class for all package errors."""


class GridRangeError(UnishiftError, IndexError):
    """An index or depth lies outside the available grid or construction."""


class ShapeError(UnishiftError, ValueError):
    """Two objects live on different grids."""


class NumericRangeError(UnishiftError, ArithmeticError):
    """Coefficients left the representable range (|z| > 1e300 or non-finite)."""


class UnsupportedModeError(UnishiftError, ValueError):
    """The operation needs a sequence built in a different mode."""
