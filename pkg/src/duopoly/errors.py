"""Exception types raised across the package."""


class DuopolyError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(DuopolyError, ValueError):
    pass


class InvalidStateError(DuopolyError, ValueError):
    pass


class InvalidConfigError(DuopolyError, ValueError):
    pass


class StepTooLargeError(DuopolyError, ArithmeticError):
    """An RK4 stage left the feasible simplex; the step size must shrink."""


class DegenerateLinearizationError(DuopolyError, ArithmeticError):
    """b == 0 or a + b == 0: the decoupling change of variables does not exist."""


class NoConvergenceError(DuopolyError, ArithmeticError):
    pass


class NoBracketError(DuopolyError, ArithmeticError):
    pass


class GridMismatchError(DuopolyError, ValueError):
    pass


class ZeroVarianceError(DuopolyError, ValueError):
    pass


class ZeroAreaError(DuopolyError, ValueError):
    pass


class IsolatedAgentError(DuopolyError, ValueError):
    pass
