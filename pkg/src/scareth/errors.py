"""Exception hierarchy shared by every module.

Each class carries the process exit code used by the command-line front end.
"""


class ScarethError(Exception):
    exit_code = 1


class ValidationError(ScarethError, ValueError):
    """Malformed or inconsistent input (bad spec, bad arguments)."""

    exit_code = 2


class ConsistencyError(ValidationError):
    """Objects that were built for different models were combined."""


class RangeError(ValidationError):
    """A target value lies outside the attainable range."""


class CapacityError(ScarethError, MemoryError):
    """A requested dimension exceeds a configured cap."""

    exit_code = 3

    def __init__(self, what: str, size: int, cap: int, hint: str = ""):
        self.size = size
        self.cap = cap
        msg = f"{what}: dimension {size} exceeds cap {cap}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class ConvergenceError(ScarethError, RuntimeError):
    exit_code = 4

    def __init__(self, msg: str, best_residual: float = float("nan")):
        self.best_residual = best_residual
        super().__init__(f"{msg} (best residual {best_residual:.3e})")


class IntegrationError(ScarethError, RuntimeError):
    exit_code = 5
