"""Exception hierarchy shared across the package.

The CLI maps error families to exit codes: UsageError -> 2,
DataError -> 3, NumericalAbort -> 4.
"""


class DtiHeadError(Exception):
    """Base class for all package errors."""


class UsageError(DtiHeadError):
    """Invalid configuration or call contract violation (exit code 2)."""


class ParameterError(UsageError):
    """A model or optimizer hyperparameter is out of its valid range."""


class DataError(DtiHeadError):
    """Invalid data: store contents, dimensions, lookups (exit code 3)."""


class DimensionError(DataError):
    """Array shapes do not match the declared dimensions."""


class DegenerateInputError(DataError):
    """An input vector has zero norm where a direction is required."""


class StoreFormatError(DataError):
    """Store file cannot be parsed (bad magic, truncation); carries offsets."""


class CheckpointError(DataError):
    """Checkpoint file cannot be parsed or is internally inconsistent."""


class StoreValidationError(DataError):
    """Store parsed but violates a structural invariant."""


class SamplingError(DataError):
    """Negative sampling exhausted its retry budget."""


class UndefinedMetricError(DataError):
    """A metric is undefined for the given inputs (constant or single-class)."""


class LookupError_(DataError):
    """An entity id is not present in the store."""


class NumericalAbort(DtiHeadError):
    """Training produced a non-finite loss (exit code 4)."""

    def __init__(self, message: str, step: int, record_ids: list[str]):
        super().__init__(message)
        self.step = step
        self.record_ids = record_ids
