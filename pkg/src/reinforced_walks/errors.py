"""Exception hierarchy shared by the library and the CLI."""


class ReinforcedWalksError(Exception):
    """Base class for all package errors."""


class ScheduleExhausted(ReinforcedWalksError, IndexError):
    """A step-size schedule was queried outside the range it defines."""


class InvalidParameters(ReinforcedWalksError, ValueError):
    """A parameter object violates its invariants."""


class InvalidKernel(InvalidParameters):
    """Kernel rows are not probability vectors, or q falls outside [0, 1]."""


class NotRepresentable(InvalidKernel):
    """Kernel cannot be written as rho * delta_y + (1 - rho) * q with rho >= 0."""


class InvalidUrn(InvalidParameters):
    """Reinforcement matrix is not balanced or not nonnegative."""


class InadmissibleRegime(InvalidParameters):
    """A limit-variance formula was requested outside its theorem's hypotheses."""


class GridMismatch(ReinforcedWalksError, KeyError):
    """A recorded ensemble does not contain the time indices a procedure needs."""


class BudgetExceeded(ReinforcedWalksError, MemoryError):
    """Requested computation exceeds the configured size budget."""


class Inconclusive(ReinforcedWalksError):
    """A statistical procedure has no usable samples."""
