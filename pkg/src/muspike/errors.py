"""Typed domain errors shared across the package."""


class MuspikeError(Exception):
    """Base class for every domain error raised by this package."""


# --- MIDI / score ---------------------------------------------------------

class MalformedHeader(MuspikeError):
    pass


class TruncatedTrack(MuspikeError):
    pass


class UnsupportedFormat(MuspikeError):
    pass


class EmptyScore(MuspikeError):
    pass


# --- tokenizer ------------------------------------------------------------

class EmptyCorpus(MuspikeError):
    pass


class MalformedSequence(MuspikeError):
    pass


class UnknownIndex(MuspikeError):
    pass


# --- spiking model --------------------------------------------------------

class DimensionMismatch(MuspikeError):
    pass


class NonFiniteLoss(MuspikeError):
    pass


class InvalidPrompt(MuspikeError):
    pass


class UnsupportedCheckpoint(MuspikeError):
    pass


# --- metrics --------------------------------------------------------------

class InsufficientNotes(MuspikeError):
    pass


class InsufficientBars(MuspikeError):
    pass


class MissingChords(MuspikeError):
    pass


# --- stats ----------------------------------------------------------------

class DegenerateGroups(MuspikeError):
    pass


class EmptyResponses(MuspikeError):
    pass


# --- study engine ---------------------------------------------------------

class InsufficientCatalog(MuspikeError):
    pass


class UnknownParticipant(MuspikeError):
    pass


class UnissuedAssignment(MuspikeError):
    pass


class DuplicateResponse(MuspikeError):
    pass
