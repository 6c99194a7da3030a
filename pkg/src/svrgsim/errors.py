"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1,
ContractViolation -> 2, I/O and format failures -> 3.
"""


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending fields."""


class ContractViolation(RuntimeError):
    """A runtime contract of the simulation was violated."""


class CapacityError(ContractViolation):
    """A machine would have to hold more functions than its capacity allows."""


class SampleBudgetError(ContractViolation):
    """The sampled multi-sets were exhausted before the scheduled steps finished."""


class InvalidStepError(ValueError):
    """Step length outside the range the convergence bound requires."""


class NoConvergenceError(ValueError):
    """Requested a stage count for a per-stage rate that does not contract."""


class StrongConvexityUnavailable(ValueError):
    """lambda = 0: the objective carries no usable strong-convexity constant."""


class DatasetFormatError(Exception):
    """Malformed dataset file; message carries the 1-based line number."""
