"""Exception types raised across the package."""


class DelphiError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DelphiError, ValueError):
    pass


class InvalidConfig(DelphiError, ValueError):
    pass


class DimensionError(DelphiError, ValueError):
    pass


class InvalidAction(DelphiError, ValueError):
    pass


class UnknownState(DelphiError, KeyError):
    pass


class TerminalStep(DelphiError):
    """Stepping (or measuring) from the terminal layer."""


class NoCheckpoint(DelphiError):
    """reset_to_checkpoint() called before any step since the last restart."""


class NoAction(DelphiError):
    """An action was requested at a state where none is defined."""


class BudgetExceeded(DelphiError):
    """The expert oracle's query budget is exhausted."""


class Unsupported(DelphiError):
    """The operation needs exact model access the environment does not expose."""


class DeterminismViolation(DelphiError):
    """Two distinct successors were observed for one state-action pair."""


class IterationOverflow(DelphiError):
    """More version-space constraints than the iteration bound allows."""


class EmptyVersionSpace(DelphiError):
    """The admissible parameter set was certified empty."""

    def __init__(self, message, violation=None, point=None):
        super().__init__(message)
        self.violation = violation
        self.point = point


class SolverStall(DelphiError):
    """The optimistic program did not converge within its iteration cap."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IllegalSequence(DelphiError, ValueError):
    """A CubeGame input violates the minimum-gap rule."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class LengthExceeded(DelphiError, ValueError):
    pass
