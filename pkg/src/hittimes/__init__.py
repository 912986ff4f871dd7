"""hittimes: a verification laboratory for hitting- and return-time laws of rare events.

Exact oracle for pattern hitting/return laws in finite-alphabet Markov shifts,
stationary backward-sampling simulators for the Gauss continued-fraction map
and the doubling map, closed-form limit-law predictions, and Monte-Carlo
estimators with ratio reports tying the three together.
"""

from . import branch_systems, estimators, markov_pattern, theory
from .errors import (
    BudgetExceededError,
    ConfigError,
    HitTimesError,
    InsufficientDataError,
    NumericalDriftError,
    ProbabilityUnderflowError,
    SamplingError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ConfigError",
    "HitTimesError",
    "InsufficientDataError",
    "NumericalDriftError",
    "ProbabilityUnderflowError",
    "SamplingError",
    "ValidationError",
    "branch_systems",
    "estimators",
    "markov_pattern",
    "theory",
]
