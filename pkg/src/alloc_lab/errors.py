"""Exception hierarchy shared by every module."""


class AllocLabError(Exception):
    """Base class for all library errors."""


class ConfigError(AllocLabError):
    """Invalid user input (bad file, bad flag value, bad range)."""


class AllInadmissible(AllocLabError):
    """No agent can receive an item."""

    def __init__(self, message="column has no admissible agent", column=None):
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)
        self.column = column


class ShapeMismatch(AllocLabError):
    pass


class NonFiniteLoad(AllocLabError):
    pass


class MaxIterExceeded(AllocLabError):
    """An iterative solver ran out of budget.

    ``diagnostics`` carries whatever the solver recorded so the caller can
    inspect how far it got.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class BadEpsilon(AllocLabError):
    pass


class BadScaling(AllocLabError):
    pass


class NonPositiveLoad(AllocLabError):
    pass


class LengthMismatch(AllocLabError):
    pass


class NonPositiveT(AllocLabError):
    pass


class Infeasible(AllocLabError):
    pass


class Unbounded(AllocLabError):
    pass


class BudgetExceeded(AllocLabError):
    pass


class NegativeCycle(AllocLabError):
    """Auxiliary graph has a negative cycle, so the assignment was not optimal."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


class NoSupport(AllocLabError):
    pass


class BadSize(AllocLabError):
    pass


class TransformError(AllocLabError):
    """A transformation could not be evaluated on some weight."""
