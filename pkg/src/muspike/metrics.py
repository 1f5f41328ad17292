"""Objective metric battery: pitch, rhythm and harmony statistics per piece.

Melody-vs-accompaniment metrics (PI, NLTM, PCS, CTnCTR) reduce the texture
to the highest sounding pitch per onset cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    EmptyScore,
    InsufficientBars,
    InsufficientNotes,
    MissingChords,
)
from .midi.score import (
    CHORD_QUALITIES,
    ChordAnnotation,
    QuantizedScore,
    Score,
    quantize,
)
from .tokens import DURATION_CLASSES_BEATS, duration_class

MAJOR_SCALE_PCS = frozenset({0, 2, 4, 5, 7, 9, 11})

CHORD_TEMPLATES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "dom7": (0, 4, 7, 10),
    "other": (0,),
}

# interval class (melody pc - chord tone pc, mod 12) -> consonance contribution
CONSONANT_CLASSES = frozenset({0, 3, 4, 7, 8, 9})
NEUTRAL_CLASSES = frozenset({5})


def _require_notes(score: Score) -> None:
    if not score.notes:
        raise EmptyScore("metric requires a non-empty score")


def pitch_count(score: Score) -> int:
    _require_notes(score)
    return len({n.pitch for n in score.notes})


def pitch_range(score: Score) -> int:
    _require_notes(score)
    pitches = [n.pitch for n in score.notes]
    return max(pitches) - min(pitches)


def melody_line(q: QuantizedScore) -> list:
    """Highest onset pitch per cell, in cell order (monophonic reduction)."""
    by_cell: dict[int, object] = {}
    for n in q.notes:
        cur = by_cell.get(n.onset_cell)
        if cur is None or n.pitch > cur.pitch:
            by_cell[n.onset_cell] = n
    return [by_cell[c] for c in sorted(by_cell)]


def avg_pitch_interval(score: Score, resolution: int = 4) -> float:
    _require_notes(score)
    line = melody_line(quantize(score, resolution))
    if len(line) < 2:
        raise InsufficientNotes("need at least two melody notes")
    diffs = [abs(b.pitch - a.pitch) for a, b in zip(line, line[1:])]
    return float(np.mean(diffs))


def _entropy_bits(counts: Iterable[int]) -> float:
    arr = np.asarray(list(counts), dtype=float)
    arr = arr[arr > 0]
    p = arr / arr.sum()
    return float(-(p * np.log2(p)).sum())


def pitch_entropy(score: Score) -> float:
    _require_notes(score)
    hist: dict[int, int] = {}
    for n in score.notes:
        hist[n.pitch] = hist.get(n.pitch, 0) + 1
    return _entropy_bits(hist.values())


def pitch_class_entropy(score: Score) -> float:
    _require_notes(score)
    hist = [0] * 12
    for n in score.notes:
        hist[n.pitch % 12] += 1
    return _entropy_bits(hist)


def pitch_in_scale_rate(
    score: Score, scale: Optional[frozenset[int] | set[int]] = None
) -> float:
    """Fraction of notes inside `scale`; with no scale given the best of the
    12 major diatonic sets is used (ties break to the lowest root)."""
    _require_notes(score)
    classes = [n.pitch % 12 for n in score.notes]
    if scale is not None:
        in_scale = sum(1 for c in classes if c in scale)
        return in_scale / len(classes)
    best = 0.0
    for root in range(12):
        pcs = {(root + p) % 12 for p in MAJOR_SCALE_PCS}
        rate = sum(1 for c in classes if c in pcs) / len(classes)
        if rate > best + 1e-12:
            best = rate
    return best


def polyphony(q: QuantizedScore) -> tuple[float, float]:
    """(average simultaneous pitches, fraction of active cells with >= 2)."""
    counts = [len(s) for s in q.sounding_sets() if s]
    if not counts:
        raise EmptyScore("no sounding cells")
    avg = float(np.mean(counts))
    rate = sum(1 for c in counts if c >= 2) / len(counts)
    return avg, rate


def avg_ioi(score: Score) -> float:
    _require_notes(score)
    onsets = sorted({n.onset for n in score.notes})
    if len(onsets) < 2:
        raise InsufficientNotes("need at least two distinct onsets")
    return float(np.mean(np.diff(onsets)))


def nltm(q: QuantizedScore) -> tuple[np.ndarray, float]:
    """Note-length transition matrix over the 8 duration classes and its
    mean row entropy (bits) over rows with support."""
    line = melody_line(q)
    if len(line) < 2:
        raise InsufficientNotes("need at least two melody notes")
    k = len(DURATION_CLASSES_BEATS)
    counts = np.zeros((k, k), dtype=float)
    classes = [duration_class(n.duration_cells / q.resolution) for n in line]
    for a, b in zip(classes, classes[1:]):
        counts[a, b] += 1
    matrix = counts.copy()
    entropies = []
    for i in range(k):
        row_sum = counts[i].sum()
        if row_sum > 0:
            matrix[i] = counts[i] / row_sum
            entropies.append(_entropy_bits(counts[i]))
    return matrix, float(np.mean(entropies))


def empty_beat_rate(q: QuantizedScore) -> float:
    onsets = q.onset_sets()
    res = q.resolution
    n_beats = q.n_beats
    empty = 0
    for b in range(n_beats):
        cells = onsets[b * res : (b + 1) * res]
        if not any(cells):
            empty += 1
    return empty / n_beats


def groove_consistency(q: QuantizedScore) -> float:
    """Mean cosine similarity between consecutive bars' binary onset vectors."""
    cpb = q.cells_per_bar
    onsets = q.onset_sets()
    bars = []
    for b in range(q.n_bars):
        vec = np.zeros(cpb)
        for i, cell in enumerate(range(b * cpb, (b + 1) * cpb)):
            if cell < len(onsets) and onsets[cell]:
                vec[i] = 1.0
        bars.append(vec)
    sims = []
    for u, v in zip(bars, bars[1:]):
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            continue
        sims.append(float(u @ v / (nu * nv)))
    if not sims:
        raise InsufficientBars("no consecutive bar pair with onsets")
    return float(np.mean(sims))


def chord_tone_pcs(ann: ChordAnnotation) -> frozenset[int]:
    return frozenset((ann.root_pc + i) % 12 for i in CHORD_TEMPLATES[ann.quality])


def _chord_at(chords: Sequence[ChordAnnotation], t: float) -> Optional[ChordAnnotation]:
    best = None
    for ann in chords:
        if ann.onset <= t + 1e-9:
            best = ann
        else:
            break
    return best


def _resolve_chords(
    q: QuantizedScore, chords: Optional[Sequence[ChordAnnotation]]
) -> Sequence[ChordAnnotation]:
    if chords:
        return sorted(chords, key=lambda a: a.onset)
    if q.score.chord_annotations:
        return q.score.chord_annotations
    raise MissingChords("no chord annotations given and inference disabled")


def pitch_consonance_score(
    q: QuantizedScore, chords: Optional[Sequence[ChordAnnotation]] = None
) -> float:
    """Windowed melody-vs-chord-tone consonance in [-1, 1].

    Per grid cell holding a melody onset: +1 for consonant interval classes,
    0 for the fourth, -1 for dissonant classes, averaged over chord tones.
    """
    chords = _resolve_chords(q, chords)
    line = melody_line(q)
    window_scores = []
    for n in line:
        ann = _chord_at(chords, q.cell_seconds(n.onset_cell))
        if ann is None:
            continue
        tones = sorted(chord_tone_pcs(ann))
        vals = []
        for tone in tones:
            ic = (n.pitch % 12 - tone) % 12
            if ic in CONSONANT_CLASSES:
                vals.append(1.0)
            elif ic in NEUTRAL_CLASSES:
                vals.append(0.0)
            else:
                vals.append(-1.0)
        window_scores.append(float(np.mean(vals)))
    if not window_scores:
        raise MissingChords("no melody window overlaps a chord annotation")
    return float(np.mean(window_scores))


def ctnctr(
    q: QuantizedScore, chords: Optional[Sequence[ChordAnnotation]] = None
) -> float:
    """Chord-tone to non-chord-tone ratio: (n_c + n_p) / (n_c + n_n), where a
    non-chord melody note counts toward n_p when it resolves within two
    semitones to the next chord-tone melody note."""
    chords = _resolve_chords(q, chords)
    line = melody_line(q)
    flags = []
    for n in line:
        ann = _chord_at(chords, q.cell_seconds(n.onset_cell))
        if ann is None:
            continue
        flags.append((n, n.pitch % 12 in chord_tone_pcs(ann)))
    if not flags:
        raise MissingChords("no melody note overlaps a chord annotation")
    n_c = sum(1 for _, is_ct in flags if is_ct)
    n_n = sum(1 for _, is_ct in flags if not is_ct)
    n_p = 0
    for i, (note, is_ct) in enumerate(flags):
        if is_ct or i + 1 >= len(flags):
            continue
        nxt, nxt_ct = flags[i + 1]
        if nxt_ct and abs(nxt.pitch - note.pitch) <= 2:
            n_p += 1
    if n_c + n_n == 0:
        raise InsufficientNotes("no scored melody notes")
    return (n_c + n_p) / (n_c + n_n)


def infer_chords(q: QuantizedScore, window_beats: float = 2.0) -> tuple[ChordAnnotation, ...]:
    """Template-matched chord labels per window of `window_beats` beats.

    Picks the best of 72 (root, quality) templates by pitch-class overlap;
    ties break to the lowest root, then the canonical quality order.  Empty
    windows carry the previous chord forward.
    """
    window_cells = max(1, int(round(window_beats * q.resolution)))
    sounding = q.sounding_sets()
    anns: list[ChordAnnotation] = []
    prev: Optional[tuple[int, str]] = None
    for start in range(0, max(len(sounding), 1), window_cells):
        pcs = set()
        for cell in range(start, min(start + window_cells, len(sounding))):
            pcs.update(p % 12 for p in sounding[cell])
        if not pcs:
            choice = prev
        else:
            best_score = -1
            choice = None
            for root in range(12):
                for quality in CHORD_QUALITIES:
                    tmpl = {(root + i) % 12 for i in CHORD_TEMPLATES[quality]}
                    overlap = len(pcs & tmpl)
                    if overlap > best_score:
                        best_score = overlap
                        choice = (root, quality)
        if choice is not None and choice != prev:
            anns.append(
                ChordAnnotation(
                    onset=q.cell_seconds(start), root_pc=choice[0], quality=choice[1]
                )
            )
        prev = choice if choice is not None else prev
    return tuple(anns)


@dataclass
class MetricReport:
    pc: Optional[float] = None
    pr: Optional[float] = None
    pi: Optional[float] = None
    pe: Optional[float] = None
    pce: Optional[float] = None
    psr: Optional[float] = None
    polyphony: Optional[float] = None
    polyphony_rate: Optional[float] = None
    ioi: Optional[float] = None
    nltm_scalar: Optional[float] = None
    ebr: Optional[float] = None
    gc: Optional[float] = None
    pcs: Optional[float] = None
    ctnctr: Optional[float] = None
    nltm: Optional[np.ndarray] = None

    SCALAR_FIELDS = (
        "pc",
        "pr",
        "pi",
        "pe",
        "pce",
        "psr",
        "polyphony",
        "polyphony_rate",
        "ioi",
        "nltm_scalar",
        "ebr",
        "gc",
        "pcs",
        "ctnctr",
    )

    def scalars(self) -> dict[str, Optional[float]]:
        return {f: getattr(self, f) for f in self.SCALAR_FIELDS}


def evaluate_all(
    score: Score,
    chords: Optional[Sequence[ChordAnnotation]] = None,
    resolution: int = 4,
    infer_missing: bool = True,
) -> MetricReport:
    """Run every metric; per-metric errors become missing values."""
    report = MetricReport()
    try:
        q = quantize(score, resolution)
    except EmptyScore:
        return report

    def run(name, fn):
        try:
            setattr(report, name, fn())
        except (EmptyScore, InsufficientNotes, InsufficientBars, MissingChords):
            pass

    run("pc", lambda: float(pitch_count(score)))
    run("pr", lambda: float(pitch_range(score)))
    run("pi", lambda: avg_pitch_interval(score, resolution))
    run("pe", lambda: pitch_entropy(score))
    run("pce", lambda: pitch_class_entropy(score))
    run("psr", lambda: pitch_in_scale_rate(score))
    run("ioi", lambda: avg_ioi(score))
    run("ebr", lambda: empty_beat_rate(q))
    run("gc", lambda: groove_consistency(q))

    try:
        avg, rate = polyphony(q)
        report.polyphony, report.polyphony_rate = avg, rate
    except EmptyScore:
        pass
    try:
        matrix, scalar = nltm(q)
        report.nltm, report.nltm_scalar = matrix, scalar
    except (InsufficientNotes, EmptyScore):
        pass

    resolved: Optional[Sequence[ChordAnnotation]] = None
    if chords:
        resolved = chords
    elif score.chord_annotations:
        resolved = score.chord_annotations
    elif infer_missing:
        resolved = infer_chords(q)
    if resolved:
        run("pcs", lambda: pitch_consonance_score(q, resolved))
        run("ctnctr", lambda: ctnctr(q, resolved))
    return report


@dataclass(frozen=True)
class AggregateTable:
    """(dataset, source, metric) -> (mean, population std, n)."""

    rows: dict[tuple[str, str, str], tuple[float, float, int]]


def aggregate(
    reports: Iterable[tuple[tuple[str, str], MetricReport]]
) -> AggregateTable:
    buckets: dict[tuple[str, str, str], list[float]] = {}
    for (dataset, source), report in reports:
        for metric, value in report.scalars().items():
            if value is None:
                continue
            buckets.setdefault((dataset, source, metric), []).append(value)
    rows = {}
    for key, values in buckets.items():
        arr = np.asarray(values)
        rows[key] = (float(arr.mean()), float(arr.std()), len(values))
    return AggregateTable(rows=rows)


# --- exports ---------------------------------------------------------------


def report_csv(rows: Iterable[tuple[str, MetricReport]]) -> str:
    header = "piece_id," + ",".join(MetricReport.SCALAR_FIELDS)
    lines = [header]
    for piece_id, report in rows:
        vals = [
            "" if v is None else f"{v:.6f}" for v in report.scalars().values()
        ]
        lines.append(piece_id + "," + ",".join(vals))
    return "\n".join(lines) + "\n"


def aggregate_csv(table: AggregateTable) -> str:
    lines = ["dataset,source,metric,mean,std,n"]
    for (dataset, source, metric), (mean, std, n) in sorted(table.rows.items()):
        lines.append(f"{dataset},{source},{metric},{mean:.6f},{std:.6f},{n}")
    return "\n".join(lines) + "\n"


def parse_aggregate_csv(text: str) -> AggregateTable:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    rows = {}
    for ln in lines[1:]:
        dataset, source, metric, mean, std, n = ln.split(",")
        rows[(dataset, source, metric)] = (float(mean), float(std), int(n))
    return AggregateTable(rows=rows)


def nltm_pgm(matrix: np.ndarray, maxval: int = 255) -> str:
    """Plain (P2) PGM heatmap of a row-stochastic transition matrix."""
    h, w = matrix.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    for row in matrix:
        lines.append(" ".join(str(int(round(v * maxval))) for v in row))
    return "\n".join(lines) + "\n"


def nltm_csv(matrix: np.ndarray) -> str:
    return "\n".join(",".join(f"{v:.6f}" for v in row) for row in matrix) + "\n"
