"""Exception hierarchy shared by the library and the command line."""


class MdpSenseError(Exception):
    """Base class for all errors raised by mdpsense."""


class ValidationError(MdpSenseError, ValueError):
    """A model, strategy or direction violates a structural invariant."""

    def __init__(self, message, issues=()):
        super().__init__(message)
        self.issues = tuple(issues)


class ShapeError(ValidationError):
    """Two objects that must share index ranges do not."""


class CapExceededError(MdpSenseError):
    """An enumeration would exceed its configured size cap."""

    def __init__(self, what, size, cap):
        super().__init__(f"{what}: {size} exceeds cap {cap}")
        self.size = size
        self.cap = cap


class NumericalError(MdpSenseError, ArithmeticError):
    """A numerical kernel met non-finite values or failed to converge."""
