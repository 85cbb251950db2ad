"""Exception hierarchy shared by all modules."""


class NsvtError(Exception):
    """Base class for errors raised by this package."""


class DomainError(NsvtError, ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(NsvtError, ArithmeticError):
    """A series or iteration failed to converge.

    Attributes
    ----------
    partial : float or ndarray or None
        Partial result at the point of failure (for series, the partial sum).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NonConvergenceError(NsvtError, RuntimeError):
    """An estimator failed to converge from every starting point.

    Attributes
    ----------
    result : FitResult or None
        The best (non-converged) fit found, including its trace.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateDataError(NsvtError, ValueError):
    """Input data cannot support the requested estimate (rank deficiency, zero variance, ...)."""


class InfeasibleError(NsvtError, ValueError):
    """A constrained problem has an empty feasible set.

    Attributes
    ----------
    violated : list of str
        Human-readable names of the constraints that cannot be met jointly.
    """

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = list(violated)


class DensityUnderflowError(NsvtError, ArithmeticError):
    """A pair density underflowed where it is needed as a divisor.

    Attributes
    ----------
    pair : tuple of int
        ``(t, i)``: 1-based time index and lag of the offending pair.
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair
