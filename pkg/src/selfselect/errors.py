"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI turns
into an exit code.
"""


class SelfSelectError(Exception):
    category = "error"
    exit_code = 1


class InvalidInputError(SelfSelectError, ValueError):
    category = "invalid-input"
    exit_code = 2


class ConfigError(SelfSelectError):
    category = "config"
    exit_code = 2


class DataIOError(SelfSelectError):
    category = "io"
    exit_code = 3


class EstimatorError(SelfSelectError):
    category = "estimator"
    exit_code = 4


class InfeasibleRegionError(EstimatorError):
    category = "infeasible-region"


class LowMassError(EstimatorError):
    category = "low-mass"


class SingularDesignError(EstimatorError):
    category = "singular-design"


class UnsupportedError(EstimatorError):
    category = "unsupported"


class InsufficientConditioningError(EstimatorError):
    category = "insufficient-conditioning"


class InsufficientSamplesError(EstimatorError):
    category = "insufficient-samples"


class NoCandidateError(EstimatorError):
    category = "no-candidate"


class BudgetExceededError(EstimatorError):
    category = "budget-exceeded"


class SamplerFailureError(EstimatorError):
    """Too many gradient steps failed inside the sampler."""

    category = "sampler-failure"


class AmbiguousSignWarning(UserWarning):
    pass


class OvercountWarning(UserWarning):
    pass


class InconsistentMomentsWarning(UserWarning):
    pass
