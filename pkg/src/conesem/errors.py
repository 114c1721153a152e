"""Exception hierarchy shared by all conesem modules."""


class ConesemError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(ConesemError, ValueError):
    """Operands live on incompatible spaces, webs, arities or dimensions."""


class OrderError(ConesemError, ValueError):
    """A partial cone operation (subtraction) was asked outside its domain."""


class BallViolation(ConesemError, ValueError):
    """A point required to lie in a unit ball does not."""


class ContractViolation(ConesemError, RuntimeError):
    """An internal invariant failed at run time (monotonicity, ball, ...)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class PcfSyntaxError(ConesemError, ValueError):
    def __init__(self, message, line, column):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class PcfTypeError(ConesemError, TypeError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term
