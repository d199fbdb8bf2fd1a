"""drtarget: demand-response targeting toolkit.

Fits per-customer probabilistic temperature-response models from hourly meter
data, then selects reliability-maximizing customer portfolios for a target
curtailment via a lambda-sweep stochastic-knapsack heuristic with a certified
approximation bound. Ships as a core library, a FastAPI service, and a CLI.
"""

__version__ = "0.1.0"

from .errors import (
    DataError,
    DrTargetError,
    InfeasibleError,
    UnsupportedFeatureError,
    ValidationError,
)

__all__ = [
    "__version__",
    "DataError",
    "DrTargetError",
    "InfeasibleError",
    "UnsupportedFeatureError",
    "ValidationError",
]
