"""Exception types shared across the toolkit."""


class SemrelError(Exception):
    """Base class for toolkit errors."""


class DataFormatError(SemrelError):
    """A dataset file violates the expected format.

    ``row`` is the 1-based CSV record number (header = record 1) when the
    problem is attributable to a single record, else None.
    """

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class CandidateStateError(SemrelError):
    """An augmentation candidate is in the wrong state for the operation."""


class GeneratorError(SemrelError):
    """A generative client call failed."""
