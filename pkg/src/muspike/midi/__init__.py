from .score import (
    CHORD_QUALITIES,
    ChordAnnotation,
    Note,
    QuantizedNote,
    QuantizedScore,
    Score,
    format_chord_sidecar,
    parse_chord_sidecar,
    quantize,
    trim,
    with_chords,
)
from .smf import parse_midi, write_midi
from .audio import note_frequency, render_signal, render_wav

__all__ = [
    "CHORD_QUALITIES",
    "ChordAnnotation",
    "Note",
    "QuantizedNote",
    "QuantizedScore",
    "Score",
    "format_chord_sidecar",
    "parse_chord_sidecar",
    "quantize",
    "trim",
    "with_chords",
    "parse_midi",
    "write_midi",
    "note_frequency",
    "render_signal",
    "render_wav",
]
