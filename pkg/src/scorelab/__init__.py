"""scorelab: a desk-scale laboratory for score-based speaker-impersonation attacks."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetExceededError,
    DegenerateInputError,
    DimensionMismatchError,
    InfeasibleDeltaError,
    ScorelabError,
    TrainingDivergedError,
    UndefinedCorrelationError,
)

__all__ = [
    "__version__",
    "BudgetExceededError",
    "DegenerateInputError",
    "DimensionMismatchError",
    "InfeasibleDeltaError",
    "ScorelabError",
    "TrainingDivergedError",
    "UndefinedCorrelationError",
]
