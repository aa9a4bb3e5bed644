"""Exception types raised across the package."""


class ScorelabError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(ScorelabError, ValueError):
    """Zero-norm vector, all-singular matrix, or similar degenerate input."""


class DimensionMismatchError(ScorelabError, ValueError):
    pass


class BudgetExceededError(ScorelabError):
    """Raised by an oracle whose query budget is exhausted."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"query budget exhausted: {count} of {budget} queries used")
        self.count = count
        self.budget = budget


class InfeasibleDeltaError(ScorelabError):
    """The pool ran out before enough delta-orthogonal members were found."""

    def __init__(self, found: int, wanted: int, delta: float):
        super().__init__(
            f"only {found} of {wanted} members admitted at delta={delta}"
        )
        self.found = found
        self.wanted = wanted
        self.delta = delta


class TrainingDivergedError(ScorelabError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


class UndefinedCorrelationError(ScorelabError, ValueError):
    """Pearson correlation requested on a zero-variance input."""
