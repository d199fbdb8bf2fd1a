"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 2, DataError -> 3,
InfeasibleError -> 4.
"""


class DrTargetError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DrTargetError):
    """A parameter or precondition check failed."""


class UnsupportedFeatureError(ValidationError):
    """The request falls outside the supported problem class.

    Heterogeneous recruitment costs and non-diagonal response covariance are
    rejected here rather than silently approximated.
    """


class DataError(DrTargetError):
    """Input data is malformed or inconsistent (bad rows, duplicates, missing zips)."""


class InfeasibleError(DrTargetError):
    """No feasible portfolio exists, or a target is unreachable."""
