"""Exception types shared across the package."""


class StructuralError(ValueError):
    """A point or table does not have the shape the search space requires."""


class InfeasibleError(ValueError):
    """No assignment satisfies the latency budget.

    ``min_cost`` carries the smallest achievable cost when it is known.
    """

    def __init__(self, message, min_cost=None):
        super().__init__(message)
        self.min_cost = min_cost


class CapExceededError(ValueError):
    """The search space is too large to enumerate under the given cap."""

    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class UndefinedCorrelationError(ValueError):
    """A rank correlation is undefined, e.g. for constant input."""


class SparsityError(ValueError):
    """A relaxed solution has more fractional groups than a basic LP solution can."""
