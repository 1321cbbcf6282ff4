"""Exception hierarchy for the toolkit.

Everything raised on purpose derives from StudysimError so the CLI can
map domain failures to a single exit code.
"""


class StudysimError(Exception):
    """Base class for all toolkit errors."""


# --- event ingestion ---------------------------------------------------


class MalformedRecord(StudysimError):
    """A log line does not match the event record schema."""


class DuplicateEvent(StudysimError):
    """Two events share the same (user, exercise, timestamp) triple."""


class InconsistentWorkbook(StudysimError):
    """An exercise id was seen under two different workbooks."""


# --- synthetic generation ----------------------------------------------


class InvalidCounts(StudysimError):
    """World dimensions are impossible (e.g. more workbooks than exercises)."""


# --- factor model -------------------------------------------------------


class UnknownUser(StudysimError):
    pass


class UnknownExercise(StudysimError):
    pass


class UnknownWorkbook(StudysimError):
    pass


class DuplicateUser(StudysimError):
    pass


class DuplicateExercise(StudysimError):
    pass


class DivergenceDetected(StudysimError):
    """A numeric update produced a non-finite value."""


# --- predictors and metrics ---------------------------------------------


class EmptyDataset(StudysimError):
    pass


class RaggedFeatures(StudysimError):
    """Feature vectors in a dataset do not all have the same length."""


class LengthMismatch(StudysimError):
    pass


class EmptyInput(StudysimError):
    pass


class SingleClass(StudysimError):
    """A binary-label operation received only one class."""


class InsufficientData(StudysimError):
    pass


# --- simulation and policies ---------------------------------------------


class EpisodeDone(StudysimError):
    """step() was called on a finished episode."""


class ExerciseNotAvailable(StudysimError):
    """The chosen exercise is not in the episode's remaining set."""


class NoCandidates(StudysimError):
    """A policy was asked to choose from an empty candidate set."""


# --- persistence and configuration ----------------------------------------


class SnapshotError(StudysimError):
    """A snapshot file is unreadable or has an incompatible version."""


class ConfigError(StudysimError):
    """An experiment configuration file is invalid."""
