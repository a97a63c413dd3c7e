"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain (e.g. t <= 0)."""


class InputError(ValueError):
    """Malformed or inconsistent input (shapes, grids, sizes)."""


class WindowError(RuntimeError):
    """A field left the evaluation window of a drift."""

    def __init__(self, message, step=None, value=None):
        super().__init__(message)
        self.step = step
        self.value = value


class BlowUpError(FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateSampleError(ArithmeticError):
    """A replicate produced a degenerate value (e.g. zero norm under a negative moment)."""
