"""Exception hierarchy shared by all solver modules."""


class BlowupError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(BlowupError, ValueError):
    pass


class SingularMatrix(BlowupError, ArithmeticError):
    pass


class NoConvergence(BlowupError, RuntimeError):
    """Newton iteration failed; ``residual`` holds the last residual norm."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NonpositiveSolution(NoConvergence):
    pass


class InsufficientNodes(BlowupError, ValueError):
    pass


class UnderflowTail(BlowupError, ArithmeticError):
    pass


class OutOfRange(BlowupError, ValueError):
    pass


class LadderNotConverged(BlowupError, RuntimeError):
    def __init__(self, message, increment=float("nan")):
        super().__init__(message)
        self.increment = increment


class MonotonicityViolation(BlowupError, AssertionError):
    def __init__(self, message, violation=float("nan")):
        super().__init__(message)
        self.violation = violation


class BlowupOverflow(BlowupError, OverflowError):
    pass


class ExhaustionNotNested(BlowupError, ValueError):
    pass


class NegativeBoundaryData(BlowupError, ValueError):
    pass


class GridMisalignment(BlowupError, ValueError):
    pass


class SnapshotMismatch(BlowupError, ValueError):
    pass


class BandViolation(BlowupError, ValueError):
    pass


class UnknownSuite(BlowupError, KeyError):
    pass


class ConfigError(BlowupError, ValueError):
    """Configuration problem; ``kind`` is one of missing-key/type-error/unknown-key."""

    def __init__(self, message, kind="type-error", key=None):
        super().__init__(message)
        self.kind = kind
        self.key = key
