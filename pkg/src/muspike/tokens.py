"""Seven-field compound-word token codec for quantized scores.

Field layout is fixed: (type, tempo, chord, bar_beat, pitch, duration,
velocity).  Class bins are pinned for determinism:

* duration classes: beat multiples (0.25, 0.5, 0.75, 1, 1.5, 2, 3, 4)
* velocity classes: 8 equal bins over 1..127
* tempo classes: 16 log-spaced bins over 40..240 BPM
* chord classes: 12 roots x 6 qualities, plus NONE
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import EmptyCorpus, EmptyScore, MalformedSequence, UnknownIndex
from .midi.score import (
    CHORD_QUALITIES,
    ChordAnnotation,
    Note,
    QuantizedScore,
    Score,
)

METRIC = "Metric"
NOTE = "Note"
EOS = "EOS"

FIELD_NAMES = ("ttype", "tempo", "chord", "bar_beat", "pitch", "duration", "velocity")

DURATION_CLASSES_BEATS = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0)
N_VELOCITY_CLASSES = 8
N_TEMPO_CLASSES = 16
TEMPO_MIN_BPM = 40.0
TEMPO_MAX_BPM = 240.0
MAX_BAR_BEATS = 16

_TEMPO_EDGES = [
    TEMPO_MIN_BPM * (TEMPO_MAX_BPM / TEMPO_MIN_BPM) ** (i / N_TEMPO_CLASSES)
    for i in range(N_TEMPO_CLASSES + 1)
]


def duration_class(beats: float) -> int:
    """Index of the nearest duration class; ties go to the shorter class."""
    best = 0
    best_err = abs(beats - DURATION_CLASSES_BEATS[0])
    for i, c in enumerate(DURATION_CLASSES_BEATS[1:], start=1):
        err = abs(beats - c)
        if err < best_err - 1e-12:
            best, best_err = i, err
    return best


def velocity_class(velocity: int) -> int:
    if not 1 <= velocity <= 127:
        raise ValueError(f"velocity out of range: {velocity}")
    return min(N_VELOCITY_CLASSES - 1, int((velocity - 1) * N_VELOCITY_CLASSES / 126))


def velocity_of_class(cls: int) -> int:
    lo = 1 + cls * 126 / N_VELOCITY_CLASSES
    hi = 1 + (cls + 1) * 126 / N_VELOCITY_CLASSES
    return max(1, min(127, int(round((lo + hi) / 2))))


def tempo_class(bpm: float) -> int:
    if bpm <= _TEMPO_EDGES[0]:
        return 0
    for i in range(N_TEMPO_CLASSES):
        if bpm <= _TEMPO_EDGES[i + 1] + 1e-9:
            return i
    return N_TEMPO_CLASSES - 1


def tempo_of_class(cls: int) -> float:
    return math.sqrt(_TEMPO_EDGES[cls] * _TEMPO_EDGES[cls + 1])


def chord_class(root_pc: int, quality: str) -> int:
    return root_pc * len(CHORD_QUALITIES) + CHORD_QUALITIES.index(quality)


def chord_of_class(cls: int) -> tuple[int, str]:
    nq = len(CHORD_QUALITIES)
    return cls // nq, CHORD_QUALITIES[cls % nq]


@dataclass(frozen=True)
class CompoundToken:
    ttype: str
    tempo: Optional[int] = None
    chord: Optional[int] = None
    bar_beat: Optional[int] = None
    pitch: Optional[int] = None
    duration: Optional[int] = None
    velocity: Optional[int] = None

    def __post_init__(self) -> None:
        if self.ttype not in (METRIC, NOTE, EOS):
            raise ValueError(f"unknown token type: {self.ttype}")
        if self.ttype == NOTE:
            if self.pitch is None or self.duration is None or self.velocity is None:
                raise ValueError("Note token requires pitch, duration and velocity")
            if self.tempo is not None or self.chord is not None:
                raise ValueError("Note token must not carry tempo or chord")
        if self.ttype == METRIC and self.pitch is not None:
            raise ValueError("Metric token must not carry pitch")
        if self.pitch is not None and not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")

    def fields(self) -> tuple:
        return (
            self.ttype,
            self.tempo,
            self.chord,
            self.bar_beat,
            self.pitch,
            self.duration,
            self.velocity,
        )


EOS_TOKEN = CompoundToken(ttype=EOS)


def encode(q: QuantizedScore) -> list[CompoundToken]:
    """Tokenize a quantized score: one Metric token per beat, one Note token
    per note (beat order, then onset cell, then ascending pitch), then EOS."""
    if not q.notes:
        raise EmptyScore("cannot encode an empty score")
    res = q.resolution
    cells_per_bar = q.cells_per_bar
    if q.score.beats_per_bar > MAX_BAR_BEATS:
        raise ValueError(f"bars beyond {MAX_BAR_BEATS} beats are not supported")
    last_beat = max(n.onset_cell // res for n in q.notes)
    by_beat: dict[int, list] = {}
    for n in q.notes:
        by_beat.setdefault(n.onset_cell // res, []).append(n)

    tokens: list[CompoundToken] = []
    for beat in range(last_beat + 1):
        beat_cell = beat * res
        t = q.cell_seconds(beat_cell)
        ann = q.score.chord_at(t)
        tokens.append(
            CompoundToken(
                ttype=METRIC,
                tempo=tempo_class(q.score.tempo_at(t)),
                chord=None if ann is None else chord_class(ann.root_pc, ann.quality),
                bar_beat=beat_cell % cells_per_bar,
            )
        )
        for n in sorted(by_beat.get(beat, []), key=lambda x: (x.onset_cell, x.pitch)):
            tokens.append(
                CompoundToken(
                    ttype=NOTE,
                    bar_beat=n.onset_cell % cells_per_bar,
                    pitch=n.pitch,
                    duration=duration_class(n.duration_cells / res),
                    velocity=velocity_class(n.velocity),
                )
            )
    tokens.append(EOS_TOKEN)
    return tokens


@dataclass(frozen=True)
class Vocab:
    """Per-field value<->index tables; index 0 is always NONE."""

    tables: dict[str, tuple]  # field -> tuple of values, NONE excluded

    VERSION = 1

    def size(self, field: str) -> int:
        return len(self.tables[field]) + 1

    def index_of(self, field: str, value) -> int:
        if value is None:
            return 0
        try:
            return self.tables[field].index(value) + 1
        except ValueError:
            raise UnknownIndex(f"value {value!r} not in vocab field {field}")

    def value_of(self, field: str, index: int):
        if index == 0:
            return None
        values = self.tables[field]
        if not 1 <= index <= len(values):
            raise UnknownIndex(f"index {index} out of range for field {field}")
        return values[index - 1]

    def encode_token(self, tok: CompoundToken) -> tuple[int, ...]:
        return tuple(
            self.index_of(f, v) for f, v in zip(FIELD_NAMES, tok.fields())
        )

    def decode_token(self, indices: Sequence[int]) -> CompoundToken:
        if len(indices) != len(FIELD_NAMES):
            raise MalformedSequence(f"expected 7 indices, got {len(indices)}")
        values = [self.value_of(f, i) for f, i in zip(FIELD_NAMES, indices)]
        if values[0] is None:
            raise MalformedSequence("token type index 0 (NONE) is not a valid type")
        try:
            return CompoundToken(*values)
        except ValueError as exc:
            raise MalformedSequence(str(exc)) from exc

    def dump(self) -> str:
        lines = [f"# vocab v{self.VERSION}"]
        for field in FIELD_NAMES:
            lines.append(f"{field}\tNONE\t0")
            for i, value in enumerate(self.tables[field], start=1):
                lines.append(f"{field}\t{value}\t{i}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "Vocab":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# vocab v"):
            raise ValueError("missing vocab version header")
        version = int(lines[0].split("v")[-1])
        if version != cls.VERSION:
            raise ValueError(f"unsupported vocab version {version}")
        tables: dict[str, list] = {f: [] for f in FIELD_NAMES}
        for ln in lines[1:]:
            field, value, index = ln.split("\t")
            if field not in tables:
                raise ValueError(f"unknown vocab field {field}")
            if value == "NONE":
                continue
            parsed = value if field == "ttype" else int(value)
            if int(index) != len(tables[field]) + 1:
                raise ValueError(f"non-contiguous index for field {field}")
            tables[field].append(parsed)
        return cls(tables={f: tuple(v) for f, v in tables.items()})


def build_vocab(corpus: Iterable[QuantizedScore]) -> Vocab:
    scores = list(corpus)
    if not scores:
        raise EmptyCorpus("cannot build a vocab from an empty corpus")
    observed: dict[str, set] = {f: set() for f in FIELD_NAMES}
    for q in scores:
        for tok in encode(q):
            for field, value in zip(FIELD_NAMES, tok.fields()):
                if value is not None:
                    observed[field].add(value)
    tables = {}
    for field in FIELD_NAMES:
        if field == "ttype":
            tables[field] = tuple(
                t for t in (METRIC, NOTE, EOS) if t in observed[field]
            )
        else:
            tables[field] = tuple(sorted(observed[field]))
    return Vocab(tables=tables)


def decode(tokens: Sequence[CompoundToken], vocab: Vocab, resolution: int = 4) -> Score:
    """Rebuild a Score from a token sequence on the grid the tokens imply."""
    if not tokens:
        raise MalformedSequence("empty token sequence")
    if tokens[-1].ttype != EOS:
        raise MalformedSequence("sequence is not EOS-terminated")
    if tokens[0].ttype != METRIC:
        raise MalformedSequence("sequence must start with a Metric token")
    # reject values a decoder with this vocab could not have produced
    for tok in tokens:
        for field, value in zip(FIELD_NAMES, tok.fields()):
            vocab.index_of(field, value)

    beats_per_bar = 4
    cells_per_bar = beats_per_bar * resolution
    beat = -1
    tempo_changes: list[tuple[int, float]] = []  # (beat, bpm)
    chords: list[tuple[int, int, str]] = []  # (cell, root, quality)
    notes_cells: list[tuple[int, int, int, int]] = []  # cell, pitch, dur_cells, vel
    for tok in tokens[:-1]:
        if tok.ttype == METRIC:
            beat += 1
            if tok.tempo is not None:
                bpm = tempo_of_class(tok.tempo)
                if not tempo_changes or tempo_changes[-1][1] != bpm:
                    tempo_changes.append((beat, bpm))
            if tok.chord is not None:
                root, quality = chord_of_class(tok.chord)
                chords.append((beat * resolution, root, quality))
        elif tok.ttype == NOTE:
            if beat < 0:
                raise MalformedSequence("Note token before the first Metric token")
            if tok.bar_beat is None:
                raise MalformedSequence("Note token without a bar_beat position")
            bar_start = (beat * resolution // cells_per_bar) * cells_per_bar
            cell = bar_start + tok.bar_beat
            if cell < beat * resolution:
                cell += cells_per_bar  # position wraps into the next bar
            dur_cells = max(1, round(DURATION_CLASSES_BEATS[tok.duration] * resolution))
            notes_cells.append((cell, tok.pitch, dur_cells, velocity_of_class(tok.velocity)))
        else:
            raise MalformedSequence("EOS before the end of the sequence")

    if not tempo_changes:
        tempo_changes = [(0, 120.0)]
    if tempo_changes[0][0] != 0:
        tempo_changes.insert(0, (0, tempo_changes[0][1]))

    # piecewise beat->seconds from the decoded tempo classes
    seconds_at = [0.0]
    for (b0, bpm0), (b1, _) in zip(tempo_changes, tempo_changes[1:]):
        seconds_at.append(seconds_at[-1] + (b1 - b0) * 60.0 / bpm0)

    def beat_to_sec(b: float) -> float:
        i = 0
        for j, (bb, _) in enumerate(tempo_changes):
            if bb <= b:
                i = j
        b0, bpm = tempo_changes[i]
        return seconds_at[i] + (b - b0) * 60.0 / bpm

    notes = []
    for cell, pitch, dur_cells, vel in notes_cells:
        onset = beat_to_sec(cell / resolution)
        offset = beat_to_sec((cell + dur_cells) / resolution)
        notes.append(Note(pitch=pitch, onset=onset, duration=offset - onset, velocity=vel))
    tempo_map = tuple((seconds_at[i], bpm) for i, (_, bpm) in enumerate(tempo_changes))
    anns = tuple(
        ChordAnnotation(onset=beat_to_sec(cell / resolution), root_pc=root, quality=quality)
        for cell, root, quality in chords
    )
    return Score(
        notes=tuple(notes),
        tempo_map=tempo_map,
        chord_annotations=anns or None,
    )


def dump_tokens(tokens: Sequence[CompoundToken], vocab: Vocab) -> str:
    """One token per line: seven vocab indices separated by spaces."""
    lines = ["# compound-word tokens v1"]
    for tok in tokens:
        lines.append(" ".join(str(i) for i in vocab.encode_token(tok)))
    return "\n".join(lines) + "\n"


def load_tokens(text: str, vocab: Vocab) -> list[CompoundToken]:
    tokens = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        indices = [int(p) for p in line.split()]
        tokens.append(vocab.decode_token(indices))
    return tokens
