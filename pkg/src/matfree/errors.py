"""Exception types raised across the package."""


class MatfreeError(Exception):
    """Base class for all package errors."""


class DegenerateElementError(MatfreeError, ValueError):
    pass


class BreakdownError(MatfreeError, ArithmeticError):
    """PCG hit d^T A d <= 0: the operator is not SPD (or there is a bug)."""


class NonConvergenceError(MatfreeError, RuntimeError):
    """PCG reached i_max before meeting the tolerance.

    The partial iterate is kept on the exception so callers can inspect it.
    """

    def __init__(self, iterations, delta, x=None):
        super().__init__(f"PCG did not converge in {iterations} iterations (delta={delta:.3e})")
        self.iterations = iterations
        self.delta = delta
        self.x = x


class PartitionError(MatfreeError, ValueError):
    pass


class ContractViolation(MatfreeError, AssertionError):
    pass


class LikelihoodError(MatfreeError, RuntimeError):
    pass


class FactorizationError(MatfreeError, ArithmeticError):
    pass
