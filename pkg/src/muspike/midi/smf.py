"""Standard MIDI File reader/writer (formats 0 and 1)."""

from __future__ import annotations

import struct
from typing import Optional

from ..errors import MalformedHeader, TruncatedTrack, UnsupportedFormat
from .score import Note, Score

_DEFAULT_TEMPO_US = 500_000  # 120 BPM


class _Reader:
    def __init__(self, data: bytes, pos: int, end: int):
        self.data = data
        self.pos = pos
        self.end = end

    def u8(self) -> int:
        if self.pos >= self.end:
            raise TruncatedTrack("track ended mid-event")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedTrack("track ended mid-event")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise TruncatedTrack("variable-length quantity longer than 4 bytes")

    @property
    def done(self) -> bool:
        return self.pos >= self.end


def _read_chunk(data: bytes, pos: int) -> tuple[bytes, int, int]:
    if pos + 8 > len(data):
        raise TruncatedTrack("chunk header past end of file")
    magic = data[pos : pos + 4]
    (length,) = struct.unpack(">I", data[pos + 4 : pos + 8])
    if pos + 8 + length > len(data):
        raise TruncatedTrack("chunk body past end of file")
    return magic, pos + 8, length


def parse_midi(data: bytes) -> Score:
    """Parse an SMF format 0/1 byte string into a Score.

    Note-on with velocity 0 counts as note-off; a second note-on for a pitch
    already sounding on the same track/channel truncates the first.
    """
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd magic")
    _, body, length = _read_chunk(data, 0)
    if length < 6:
        raise MalformedHeader(f"header chunk too short: {length}")
    fmt, ntrks, division = struct.unpack(">HHH", data[body : body + 6])
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 is not supported")
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("zero ticks per quarter")

    pos = body + length
    # (tick, pitch, velocity, track, channel) note-ons; tempo/timesig events
    tempos: list[tuple[int, int]] = []  # (tick, us per quarter)
    timesig: Optional[tuple[int, int]] = None
    raw_notes: list[tuple[int, int, int, int, int]] = []  # onset/off pairs resolved below

    track_index = 0
    parsed_tracks = 0
    while parsed_tracks < ntrks and pos < len(data):
        magic, start, tlen = _read_chunk(data, pos)
        pos = start + tlen
        if magic != b"MTrk":
            continue  # alien chunks are skipped per the SMF spec
        r = _Reader(data, start, start + tlen)
        tick = 0
        status = 0
        open_notes: dict[tuple[int, int], tuple[int, int]] = {}  # (ch,pitch)->(tick,vel)

        def close(ch: int, pitch: int, off_tick: int) -> None:
            started = open_notes.pop((ch, pitch), None)
            if started is not None and off_tick > started[0]:
                raw_notes.append((started[0], off_tick, pitch, started[1], track_index))

        while not r.done:
            tick += r.varlen()
            b = r.u8()
            if b == 0xFF:
                meta = r.u8()
                mlen = r.varlen()
                payload = r.take(mlen)
                if meta == 0x51 and mlen == 3:
                    tempos.append((tick, int.from_bytes(payload, "big")))
                elif meta == 0x58 and mlen >= 2 and timesig is None:
                    timesig = (payload[0], 1 << payload[1])
                elif meta == 0x2F:
                    break
                continue
            if b in (0xF0, 0xF7):
                r.take(r.varlen())
                continue
            if b & 0x80:
                status = b
                d1 = r.u8()
            else:
                if status == 0:
                    raise TruncatedTrack("running status with no prior status byte")
                d1 = b
            kind = status & 0xF0
            ch = status & 0x0F
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                d2 = r.u8()
            elif kind in (0xC0, 0xD0):
                d2 = 0
            else:
                raise TruncatedTrack(f"unexpected status byte 0x{status:02x}")
            if kind == 0x90 and d2 > 0:
                if (ch, d1) in open_notes:
                    close(ch, d1, tick)  # retrigger truncates
                open_notes[(ch, d1)] = (tick, d2)
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                close(ch, d1, tick)
        for (ch, pitch), (on_tick, vel) in list(open_notes.items()):
            # dangling note-ons close at the track's final tick
            if tick > on_tick:
                raw_notes.append((on_tick, tick, pitch, vel, track_index))
        track_index += 1
        parsed_tracks += 1

    if parsed_tracks < ntrks:
        raise TruncatedTrack(f"expected {ntrks} tracks, found {parsed_tracks}")

    tempos.sort()
    if not tempos or tempos[0][0] != 0:
        tempos.insert(0, (0, _DEFAULT_TEMPO_US))
    # deduplicate ticks, keep the last event at a tick
    dedup: dict[int, int] = {}
    for t, us in tempos:
        dedup[t] = us
    tempos = sorted(dedup.items())

    # piecewise tick->seconds conversion
    seconds_at: list[float] = [0.0]
    for (t0, us0), (t1, _) in zip(tempos, tempos[1:]):
        seconds_at.append(seconds_at[-1] + (t1 - t0) * us0 / 1e6 / division)

    def tick_to_sec(tick: int) -> float:
        i = 0
        for j, (t, _) in enumerate(tempos):
            if t <= tick:
                i = j
            else:
                break
        t0, us = tempos[i]
        return seconds_at[i] + (tick - t0) * us / 1e6 / division

    tempo_map = tuple(
        (seconds_at[i], 6e7 / us) for i, (_, us) in enumerate(tempos)
    )
    notes = tuple(
        Note(
            pitch=pitch,
            onset=tick_to_sec(on),
            duration=tick_to_sec(off) - tick_to_sec(on),
            velocity=vel,
            track=trk,
        )
        for on, off, pitch, vel, trk in raw_notes
    )
    return Score(
        notes=notes,
        tempo_map=tempo_map,
        time_signature=timesig or (4, 4),
        ticks_per_quarter=division,
    )


def _varlen(value: int) -> bytes:
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.insert(0, 0x80 | (value & 0x7F))
        value >>= 7
    return bytes(out)


def write_midi(score: Score) -> bytes:
    """Serialize a Score as a single-track (format 0) SMF byte string."""
    tpq = score.ticks_per_quarter

    def sec_to_tick(t: float) -> int:
        return int(round(score.seconds_to_beats(t) * tpq))

    events: list[tuple[int, int, bytes]] = []  # (tick, order, payload)
    num, den = score.time_signature
    denpow = max(0, den.bit_length() - 1)
    events.append((0, 0, bytes([0xFF, 0x58, 0x04, num, denpow, 24, 8])))
    for t, bpm in score.tempo_map:
        us = int(round(6e7 / bpm))
        events.append((sec_to_tick(t), 0, bytes([0xFF, 0x51, 0x03]) + us.to_bytes(3, "big")))
    for n in score.notes:
        on = sec_to_tick(n.onset)
        off = max(on + 1, sec_to_tick(n.onset + n.duration))
        events.append((on, 2, bytes([0x90, n.pitch, n.velocity])))
        events.append((off, 1, bytes([0x80, n.pitch, 0x40])))

    events.sort(key=lambda e: (e[0], e[1]))
    body = bytearray()
    prev = 0
    for tick, _, payload in events:
        body += _varlen(tick - prev)
        body += payload
        prev = tick
    body += _varlen(0) + bytes([0xFF, 0x2F, 0x00])

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, tpq)
    track = b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return header + track
