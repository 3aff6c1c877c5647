"""Exception types shared across the toolkit."""


class EpitraceError(Exception):
    """Base class for all toolkit errors."""


class ParseError(EpitraceError):
    """Malformed input file row; carries the offending path and row number."""

    def __init__(self, path, row, message):
        self.path = path
        self.row = row
        super().__init__(f"{path}:{row}: {message}")


class ValidationError(EpitraceError):
    """Structurally valid input that violates a model constraint."""


class UnknownId(EpitraceError):
    """Reference to an individual id not present in the population."""


class DomainError(EpitraceError):
    """Argument outside the mathematical domain of an operation."""


class InvalidInterval(EpitraceError):
    """Interval with t1 < t0."""


class InconsistentState(EpitraceError):
    """Epidemic record / contact data combination with zero probability.

    Raised for structural contradictions; plain zero-likelihood
    configurations are reported as -inf with a reason string instead.
    """


class ConfigError(EpitraceError):
    """Invalid run configuration."""


class NumericalError(EpitraceError):
    """Numerical breakdown (non-PD covariance, overflow) in the sampler."""


class EmptyPosterior(EpitraceError):
    """Posterior set with no retained samples."""


class ConditioningTimeout(EpitraceError):
    """Rejection sampling for study conditioning made no progress."""


class BudgetError(EpitraceError):
    """MCMC budget too small for a minimal chain."""
