"""Exception hierarchy for the training-design library and run workflow."""

from typing import Optional


class TrainDesignError(Exception):
    """Base class for every error raised by traindesign."""


class DimensionError(TrainDesignError, ValueError):
    """Shapes do not conform (non-square input, size mismatch)."""


class NotHermitianError(DimensionError):
    """A matrix expected to be Hermitian is asymmetric beyond tolerance."""


class NotPositiveSemidefiniteError(TrainDesignError, ValueError):
    """A PSD/PD precondition is violated."""


class DegenerateInputError(TrainDesignError, ValueError):
    """An input that must be nonzero is zero (e.g. a reference channel)."""


class RankDeficientError(TrainDesignError):
    """A matrix that has to be invertible or full rank is not."""

    def __init__(self, message: str, dimension: str, rank: Optional[int] = None):
        super().__init__(message)
        self.dimension = dimension
        self.rank = rank


class InfeasibleDesignError(TrainDesignError):
    """A training-design problem has no solution under the given data."""

    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


class CaseAssumptionError(InfeasibleDesignError):
    """The covariance structure does not satisfy the selected design case."""


class OrderingGuardError(TrainDesignError):
    """Exhaustive eigenvalue-ordering search would exceed its size guard."""


class ConfigError(TrainDesignError, ValueError):
    """Experiment configuration is missing, malformed or inconsistent."""


class ResultsWriteError(TrainDesignError, OSError):
    """Result files could not be written."""
