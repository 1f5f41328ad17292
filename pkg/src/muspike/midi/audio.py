"""Sine-tone WAV preview rendering for listening-study delivery."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import EmptyScore
from .score import Score

SUPPORTED_RATES = (22050, 44100)

_ATTACK_S = 0.010
_PEAK_DBFS = -1.0


def note_frequency(pitch: int) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def render_signal(score: Score, sample_rate: int) -> np.ndarray:
    """Float signal before peak normalization; one sine per note."""
    if sample_rate not in SUPPORTED_RATES:
        raise ValueError(f"sample_rate must be one of {SUPPORTED_RATES}")
    if not score.notes:
        raise EmptyScore("nothing to render")
    total = score.duration_seconds
    n_samples = int(np.ceil(total * sample_rate))
    signal = np.zeros(n_samples, dtype=np.float64)
    for note in score.notes:
        start = int(round(note.onset * sample_rate))
        length = int(round(note.duration * sample_rate))
        if length <= 0:
            continue
        t = np.arange(length) / sample_rate
        tone = np.sin(2 * np.pi * note_frequency(note.pitch) * t)
        ramp = max(1, int(round(_ATTACK_S * sample_rate)))
        env = np.ones(length)
        n_ramp = min(ramp, length // 2) or 1
        env[:n_ramp] = np.linspace(0.0, 1.0, n_ramp, endpoint=False)
        env[-n_ramp:] = np.linspace(1.0, 0.0, n_ramp)
        amp = note.velocity / 127.0
        end = min(start + length, n_samples)
        signal[start:end] += (amp * tone * env)[: end - start]
    return signal


def render_wav(score: Score, sample_rate: int = 22050) -> bytes:
    """RIFF/WAVE PCM16 mono render, peak-normalized to -1 dBFS."""
    signal = render_signal(score, sample_rate)
    peak = np.max(np.abs(signal))
    target = 10.0 ** (_PEAK_DBFS / 20.0)
    if peak > 0:
        signal = signal * (target / peak)
    pcm = np.clip(np.round(signal * 32767.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    n = len(payload)
    header = (
        b"RIFF"
        + struct.pack("<I", 36 + n)
        + b"WAVE"
        + b"fmt "
        + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
        + b"data"
        + struct.pack("<I", n)
    )
    return header + payload
