"""Canonical in-memory score: notes, tempo map, beat grid, excerpt trimming."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..errors import EmptyScore

CHORD_QUALITIES = ("maj", "min", "dim", "aug", "dom7", "other")

VALID_RESOLUTIONS = (1, 2, 4, 8, 12, 16)


@dataclass(frozen=True)
class Note:
    pitch: int
    onset: float
    duration: float
    velocity: int
    track: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if self.onset < 0:
            raise ValueError(f"negative onset: {self.onset}")
        if self.duration <= 0:
            raise ValueError(f"non-positive duration: {self.duration}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if self.track < 0:
            raise ValueError(f"negative track: {self.track}")


@dataclass(frozen=True)
class ChordAnnotation:
    onset: float
    root_pc: int
    quality: str

    def __post_init__(self) -> None:
        if not 0 <= self.root_pc <= 11:
            raise ValueError(f"root pitch class out of range: {self.root_pc}")
        if self.quality not in CHORD_QUALITIES:
            raise ValueError(f"unknown chord quality: {self.quality}")


@dataclass(frozen=True)
class Score:
    notes: tuple[Note, ...]
    tempo_map: tuple[tuple[float, float], ...] = ((0.0, 120.0),)
    time_signature: tuple[int, int] = (4, 4)
    ticks_per_quarter: int = 480
    chord_annotations: Optional[tuple[ChordAnnotation, ...]] = None

    def __post_init__(self) -> None:
        notes = tuple(sorted(self.notes, key=lambda n: (n.onset, n.pitch)))
        object.__setattr__(self, "notes", notes)
        if not self.tempo_map or self.tempo_map[0][0] != 0.0:
            raise ValueError("tempo map must start at time 0")
        times = [t for t, _ in self.tempo_map]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tempo map times must be strictly increasing")
        if any(bpm <= 0 for _, bpm in self.tempo_map):
            raise ValueError("tempo must be positive")
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")

    def __len__(self) -> int:
        return len(self.notes)

    @property
    def duration_seconds(self) -> float:
        if not self.notes:
            return 0.0
        return max(n.onset + n.duration for n in self.notes)

    @property
    def beats_per_bar(self) -> float:
        num, den = self.time_signature
        return num * 4.0 / den

    def _beat_breakpoints(self) -> list[float]:
        # cumulative beats at each tempo-map breakpoint
        beats = [0.0]
        for (t0, bpm), (t1, _) in zip(self.tempo_map, self.tempo_map[1:]):
            beats.append(beats[-1] + (t1 - t0) * bpm / 60.0)
        return beats

    def seconds_to_beats(self, t: float) -> float:
        times = [x for x, _ in self.tempo_map]
        beats = self._beat_breakpoints()
        i = max(0, bisect.bisect_right(times, t) - 1)
        t0, bpm = self.tempo_map[i]
        return beats[i] + (t - t0) * bpm / 60.0

    def beats_to_seconds(self, b: float) -> float:
        beats = self._beat_breakpoints()
        i = max(0, bisect.bisect_right(beats, b) - 1)
        if i >= len(self.tempo_map):
            i = len(self.tempo_map) - 1
        t0, bpm = self.tempo_map[i]
        return t0 + (b - beats[i]) * 60.0 / bpm

    def tempo_at(self, t: float) -> float:
        times = [x for x, _ in self.tempo_map]
        i = max(0, bisect.bisect_right(times, t) - 1)
        return self.tempo_map[i][1]

    def chord_at(self, t: float) -> Optional[ChordAnnotation]:
        if not self.chord_annotations:
            return None
        best = None
        for ann in self.chord_annotations:
            if ann.onset <= t + 1e-9:
                best = ann
            else:
                break
        return best


@dataclass(frozen=True)
class QuantizedNote:
    pitch: int
    velocity: int
    onset_cell: int
    duration_cells: int
    track: int = 0


@dataclass(frozen=True)
class QuantizedScore:
    score: Score
    resolution: int
    notes: tuple[QuantizedNote, ...]
    n_cells: int = field(init=False)

    def __post_init__(self) -> None:
        last = max((n.onset_cell + n.duration_cells for n in self.notes), default=0)
        object.__setattr__(self, "n_cells", last)

    @property
    def cells_per_beat(self) -> int:
        return self.resolution

    @property
    def cells_per_bar(self) -> int:
        return int(round(self.score.beats_per_bar * self.resolution))

    @property
    def n_beats(self) -> int:
        return max(1, math.ceil(self.n_cells / self.resolution))

    @property
    def n_bars(self) -> int:
        return max(1, math.ceil(self.n_cells / self.cells_per_bar))

    def onset_pitches(self, cell: int) -> set[int]:
        return {n.pitch for n in self.notes if n.onset_cell == cell}

    def sounding_pitches(self, cell: int) -> set[int]:
        return {
            n.pitch
            for n in self.notes
            if n.onset_cell <= cell < n.onset_cell + n.duration_cells
        }

    def onset_sets(self) -> list[set[int]]:
        cells: list[set[int]] = [set() for _ in range(self.n_cells)]
        for n in self.notes:
            cells[n.onset_cell].add(n.pitch)
        return cells

    def sounding_sets(self) -> list[set[int]]:
        cells: list[set[int]] = [set() for _ in range(self.n_cells)]
        for n in self.notes:
            for c in range(n.onset_cell, n.onset_cell + n.duration_cells):
                cells[c].add(n.pitch)
        return cells

    def cell_seconds(self, cell: int) -> float:
        return self.score.beats_to_seconds(cell / self.resolution)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def quantize(score: Score, resolution: int = 4) -> QuantizedScore:
    """Snap every note onto a grid of `resolution` cells per beat.

    Onsets round to the nearest cell, half-way points toward the later cell.
    A note sustains in every cell it overlaps (at least one).
    """
    if resolution not in VALID_RESOLUTIONS:
        raise ValueError(f"resolution must be one of {VALID_RESOLUTIONS}")
    if not score.notes:
        raise EmptyScore("cannot quantize a score with no notes")
    qnotes = []
    for n in score.notes:
        onset_beats = score.seconds_to_beats(n.onset)
        end_beats = score.seconds_to_beats(n.onset + n.duration)
        onset_cell = _round_half_up(onset_beats * resolution)
        dur_cells = max(1, _round_half_up((end_beats - onset_beats) * resolution))
        qnotes.append(
            QuantizedNote(
                pitch=n.pitch,
                velocity=n.velocity,
                onset_cell=onset_cell,
                duration_cells=dur_cells,
                track=n.track,
            )
        )
    qnotes.sort(key=lambda q: (q.onset_cell, q.pitch))
    return QuantizedScore(score=score, resolution=resolution, notes=tuple(qnotes))


def trim(score: Score, max_seconds: float) -> Score:
    """Drop notes at or past `max_seconds` and clip notes crossing it."""
    if max_seconds <= 0:
        raise ValueError("max_seconds must be positive")
    kept = []
    for n in score.notes:
        if n.onset >= max_seconds:
            continue
        end = min(n.onset + n.duration, max_seconds)
        if end - n.onset <= 0:
            continue
        kept.append(
            Note(n.pitch, n.onset, end - n.onset, n.velocity, n.track)
        )
    return Score(
        notes=tuple(kept),
        tempo_map=score.tempo_map,
        time_signature=score.time_signature,
        ticks_per_quarter=score.ticks_per_quarter,
        chord_annotations=score.chord_annotations,
    )


def parse_chord_sidecar(text: str) -> tuple[ChordAnnotation, ...]:
    """Parse `onset<TAB>root_pc<TAB>quality` lines into chord annotations."""
    anns = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"sidecar line {lineno}: expected 3 tab-separated fields")
        onset = float(parts[0])
        root = int(parts[1])
        anns.append(ChordAnnotation(onset=onset, root_pc=root, quality=parts[2]))
    anns.sort(key=lambda a: a.onset)
    return tuple(anns)


def format_chord_sidecar(annotations: Iterable[ChordAnnotation]) -> str:
    return "".join(f"{a.onset:g}\t{a.root_pc}\t{a.quality}\n" for a in annotations)


def with_chords(score: Score, annotations: Sequence[ChordAnnotation]) -> Score:
    return Score(
        notes=score.notes,
        tempo_map=score.tempo_map,
        time_signature=score.time_signature,
        ticks_per_quarter=score.ticks_per_quarter,
        chord_annotations=tuple(sorted(annotations, key=lambda a: a.onset)),
    )
