"""Exception hierarchy shared by all modules."""


class SSMDistillError(Exception):
    """Base class for every error raised by this package."""


class SystemOverflowError(SSMDistillError, ArithmeticError):
    """A recurrence produced a non-finite value.

    Attributes
    ----------
    index : int
        First time index whose value was not finite.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"non-finite value at time index t={self.index}")


class PoleProximityError(SSMDistillError, ZeroDivisionError):
    """A transfer function was evaluated on (or numerically at) a pole."""

    def __init__(self, point, message=None):
        self.point = complex(point)
        super().__init__(message or f"evaluation point {self.point!r} is too close to a pole")


class NumericalFailureError(SSMDistillError):
    """An iterative solver did not converge."""

    def __init__(self, message, iterations=None):
        self.iterations = iterations
        if iterations is not None:
            message = f"{message} (after {iterations} iterations)"
        super().__init__(message)


class NonDiagonalizableError(SSMDistillError):
    """Repeated or clustered poles: the modal form does not exist."""


class IllConditionedError(SSMDistillError):
    """A correction or inversion is numerically meaningless."""


class ConsistencyError(SSMDistillError):
    """An internal cross-check failed (e.g. residual imaginary part)."""


class DistillationError(SSMDistillError):
    """Optimisation diverged and could not be recovered."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class BankFormatError(SSMDistillError, ValueError):
    """A bank file is malformed.

    Attributes
    ----------
    offset : int
        Byte offset at which the problem was detected.
    """

    def __init__(self, message, offset):
        self.offset = int(offset)
        super().__init__(f"{message} (byte offset {self.offset})")
