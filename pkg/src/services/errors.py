"""
Errors raised by the estimators, engines, generators and benchmark harness.
"""


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


class DegenerateSample(ConsensusError):
    """The sample does not determine a unique model (coincident or collinear points)."""


class ProjectionAtInfinity(ConsensusError):
    """A homography maps the point to the line at infinity."""


class InvalidDataset(ConsensusError, ValueError):
    """Observations are malformed, non-finite or of mixed kinds."""


class BudgetExhausted(ConsensusError):
    """No evaluations are left in the model budget."""


class InsufficientData(ConsensusError, ValueError):
    """The dataset holds fewer observations than the minimal sample size."""


class InfeasibleSpec(ConsensusError, ValueError):
    """A synthetic dataset cannot be generated for the requested parameters."""


class TooLarge(ConsensusError, ValueError):
    """Exhaustive enumeration would exceed the combination bound."""


class MissingBaseline(ConsensusError):
    """The RANSAC baseline is required to compute improvements."""


class ConfigInvalid(ConsensusError, ValueError):
    """A benchmark configuration field is missing or out of range."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
