import random

import pytest

from muspike.midi import Note, Score


def grid_score(
    rng: random.Random,
    n_notes: int = 10,
    bpm: float = 120.0,
    polyphonic: bool = False,
) -> Score:
    """A random score whose notes sit exactly on a 16th-note grid at `bpm`."""
    spb = 60.0 / bpm
    notes = []
    beat = 0.0
    for _ in range(n_notes):
        dur_beats = rng.choice((0.25, 0.5, 0.75, 1.0, 1.5, 2.0))
        notes.append(
            Note(
                pitch=rng.randint(36, 96),
                onset=beat * spb,
                duration=dur_beats * spb,
                velocity=rng.randint(1, 127),
            )
        )
        if polyphonic and rng.random() < 0.3:
            extra = rng.randint(36, 96)
            if all(n.pitch != extra or n.onset != beat * spb for n in notes):
                notes.append(
                    Note(
                        pitch=extra,
                        onset=beat * spb,
                        duration=dur_beats * spb,
                        velocity=rng.randint(1, 127),
                    )
                )
        beat += rng.choice((0.25, 0.5, 1.0))
    return Score(notes=tuple(notes), tempo_map=((0.0, bpm),))


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
