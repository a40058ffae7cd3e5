"""Shared exception types."""


class HarmonevalError(Exception):
    """Base class for domain errors raised by this package."""


class EmptyInputError(HarmonevalError, ValueError):
    """An operation that needs at least one element received none."""


class InvalidTrainingItemError(HarmonevalError, ValueError):
    """A lead sheet cannot contribute training windows (e.g. no chords)."""


class TrainingDivergedError(HarmonevalError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class UnsupportedTimeSignatureError(HarmonevalError, ValueError):
    """The requested rendering only supports 4/4."""


class UnvoicableChordError(HarmonevalError, LookupError):
    """A chord has no entry in the active voicing chart."""


class StudyConfigError(HarmonevalError, ValueError):
    """A study configuration violates its invariants."""


class UnknownSessionError(HarmonevalError, KeyError):
    """No session with the given id."""


class AlreadySubmittedError(HarmonevalError):
    """A ranking for this page was already recorded."""


class InvalidResponseError(HarmonevalError, ValueError):
    """A submitted ranking does not match the page's stimulus ids."""


class IncompleteSessionError(HarmonevalError):
    """Finalize was called before both pages were submitted."""


class ConvergenceError(HarmonevalError):
    """An iterative fit did not converge within its iteration budget."""


class DesignError(HarmonevalError, ValueError):
    """The design matrix is rank deficient or otherwise unusable."""


class SeparationError(HarmonevalError):
    """Model parameters diverged, indicating (quasi-)separation."""
