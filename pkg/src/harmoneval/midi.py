"""Standard MIDI File writing and parsing.

The writer emits deterministic format-1 files: track 0 holds tempo and time
signature, and each arrangement track becomes one chunk opening with a track
name, a program change and a channel-volume controller before its notes.  No
running status is used, so identical arrangements always produce identical
bytes and export -> parse -> export round-trips exactly.
"""

from __future__ import annotations

import struct
from collections import deque
from typing import Optional

from .arrange import Arrangement, ArrangementTrack, RenderConfig
from .symbolic import Melody, NoteEvent, PitchClass

_HEADER = b"MThd"
_TRACK = b"MTrk"
_NOTE_VELOCITY = 96


def _vlq(value: int) -> bytes:
    """Variable-length quantity encoding."""
    if value < 0:
        raise ValueError(f"negative delta time: {value}")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _meta(kind: int, data: bytes) -> bytes:
    return bytes([0xFF, kind]) + _vlq(len(data)) + data


def _tempo_meta(bpm: float) -> bytes:
    usec_per_quarter = round(60_000_000 / bpm)
    return _meta(0x51, usec_per_quarter.to_bytes(3, "big"))


def _time_signature_meta(numerator: int, denominator: int) -> bytes:
    dd = denominator.bit_length() - 1
    if 1 << dd != denominator:
        raise ValueError(f"time signature denominator must be a power of two: {denominator}")
    return _meta(0x58, bytes([numerator, dd, 24, 8]))


def _track_chunk(events: list[tuple[int, int, bytes]]) -> bytes:
    """Assemble a chunk from (tick, sort_order, event_bytes) triples."""
    events = sorted(events, key=lambda e: (e[0], e[1]))
    payload = bytearray()
    last_tick = 0
    for tick, _order, data in events:
        payload += _vlq(tick - last_tick)
        payload += data
        last_tick = tick
    payload += _vlq(0) + _meta(0x2F, b"")
    return _TRACK + struct.pack(">I", len(payload)) + bytes(payload)


def write_smf(arr: Arrangement) -> bytes:
    """Serialize an arrangement as a format-1 Standard MIDI File."""
    if not arr.tracks:
        raise ValueError("cannot export an arrangement with no tracks")
    chunks = [struct.pack(">4sIHHH", _HEADER, 6, 1, len(arr.tracks) + 1, arr.ppq)]

    meta_events = [
        (0, 0, _tempo_meta(arr.tempo)),
        (0, 1, _time_signature_meta(*arr.time_signature)),
    ]
    chunks.append(_track_chunk(meta_events))

    for track in arr.tracks:
        ch = track.channel
        events: list[tuple[int, int, bytes]] = [
            (0, 0, _meta(0x03, track.name.encode("utf-8"))),
            (0, 1, bytes([0xC0 | ch, track.program])),
            (0, 2, bytes([0xB0 | ch, 7, track.volume])),
        ]
        for note in track.notes:
            # note_off sorts before note_on at the same tick (order 3 vs 4)
            # so re-struck pitches never overlap.
            events.append((note.onset, 4, bytes([0x90 | ch, note.pitch, _NOTE_VELOCITY])))
            events.append((note.end, 3, bytes([0x80 | ch, note.pitch, 0])))
        chunks.append(_track_chunk(events))

    return b"".join(chunks)


def export_midi(arr: Arrangement, config: Optional[RenderConfig] = None) -> bytes:
    """Spec surface for MIDI export; config overrides tempo/ppq if given."""
    if config is not None and (config.tempo != arr.tempo or config.ppq != arr.ppq):
        arr = arr.rescaled(tempo=config.tempo, ppq=config.ppq)
    return write_smf(arr)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def eof(self) -> bool:
        return self.pos >= len(self.data)

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated MIDI data")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.read(1)[0]

    def peek(self) -> int:
        return self.data[self.pos]

    def vlq(self) -> int:
        value = 0
        while True:
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value


class _TrackState:
    """Raw contents of one parsed chunk."""

    def __init__(self):
        self.name: Optional[str] = None
        self.program = 0
        self.volume = 127
        self.channel = 0
        self.notes: list[NoteEvent] = []
        self.tempo_bpm: Optional[float] = None
        self.time_signature: Optional[tuple[int, int]] = None
        self.key_tonic: Optional[PitchClass] = None


def _parse_track(reader: _Reader) -> _TrackState:
    state = _TrackState()
    open_notes: dict[int, deque[int]] = {}
    tick = 0
    status = 0
    while True:
        tick += reader.vlq()
        byte = reader.u8()
        if byte == 0xFF:
            kind = reader.u8()
            data = reader.read(reader.vlq())
            if kind == 0x2F:
                break
            if kind == 0x03 and state.name is None:
                state.name = data.decode("utf-8", errors="replace")
            elif kind == 0x51:
                state.tempo_bpm = 60_000_000 / int.from_bytes(data, "big")
            elif kind == 0x58:
                state.time_signature = (data[0], 1 << data[1])
            elif kind == 0x59:
                sf = int.from_bytes(data[0:1], "big", signed=True)
                mode = data[1] if len(data) > 1 else 0
                base = 9 if mode == 1 else 0
                state.key_tonic = PitchClass((base + sf * 7) % 12)
            continue
        if byte in (0xF0, 0xF7):  # sysex
            reader.read(reader.vlq())
            continue
        if byte & 0x80:
            status = byte
            data1 = reader.u8()
        else:  # running status
            data1 = byte
        kind = status & 0xF0
        state.channel = status & 0x0F
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            data2 = reader.u8()
        else:
            data2 = 0
        if kind == 0x90 and data2 > 0:
            open_notes.setdefault(data1, deque()).append(tick)
        elif kind == 0x80 or (kind == 0x90 and data2 == 0):
            pending = open_notes.get(data1)
            if pending:
                onset = pending.popleft()
                if tick > onset:
                    state.notes.append(NoteEvent(onset, tick - onset, data1))
        elif kind == 0xB0 and data1 == 7:
            state.volume = data2
        elif kind == 0xC0:
            state.program = data1
    state.notes.sort(key=lambda n: (n.onset, n.pitch))
    return state


def _parse_chunks(data: bytes) -> tuple[int, int, list[_TrackState]]:
    reader = _Reader(data)
    magic, length = struct.unpack(">4sI", reader.read(8))
    if magic != _HEADER:
        raise ValueError("not a Standard MIDI File (missing MThd)")
    header = reader.read(length)
    fmt, ntracks, division = struct.unpack(">HHH", header[:6])
    if division & 0x8000:
        raise ValueError("SMPTE time division is not supported")
    tracks = []
    while not reader.eof():
        chunk_magic, chunk_len = struct.unpack(">4sI", reader.read(8))
        chunk = _Reader(reader.read(chunk_len))
        if chunk_magic == _TRACK:
            tracks.append(_parse_track(chunk))
    if len(tracks) != ntracks:
        raise ValueError(f"header announced {ntracks} tracks, found {len(tracks)}")
    return fmt, division, tracks


def parse_smf(data: bytes) -> Arrangement:
    """Rebuild an Arrangement from SMF bytes produced by write_smf."""
    _fmt, division, raw = _parse_chunks(data)
    if not raw:
        raise ValueError("MIDI file has no tracks")
    tempo = 120.0
    time_signature = (4, 4)
    for state in raw:
        if state.tempo_bpm is not None:
            tempo = state.tempo_bpm
            break
    for state in raw:
        if state.time_signature is not None:
            time_signature = state.time_signature
            break
    instrument = [t for t in raw[1:]] if len(raw) > 1 else raw
    tracks = tuple(
        ArrangementTrack(
            name=t.name if t.name is not None else f"track{i}",
            channel=t.channel,
            program=t.program,
            volume=t.volume,
            notes=tuple(t.notes),
        )
        for i, t in enumerate(instrument)
    )
    return Arrangement(
        tracks=tracks,
        tempo=tempo,
        ppq=division,
        time_signature=time_signature,
    )


def melody_from_smf(data: bytes) -> Melody:
    """Read the first non-empty track of an SMF as a monophonic melody.

    Overlapping notes are truncated at the next onset; a key signature, when
    present, becomes the melody's declared tonic.
    """
    _fmt, division, raw = _parse_chunks(data)
    time_signature = (4, 4)
    tonic: Optional[PitchClass] = None
    for state in raw:
        if state.time_signature is not None:
            time_signature = state.time_signature
            break
    for state in raw:
        if state.key_tonic is not None:
            tonic = state.key_tonic
            break
    for state in raw:
        if state.notes:
            notes = _monophonic(state.notes)
            return Melody(
                notes=tuple(notes),
                ppq=division,
                time_signature=time_signature,
                declared_tonic=tonic,
            )
    raise ValueError("MIDI file contains no notes")


def _monophonic(notes: list[NoteEvent]) -> list[NoteEvent]:
    ordered = sorted(notes, key=lambda n: (n.onset, n.pitch))
    out: list[NoteEvent] = []
    for i, note in enumerate(ordered):
        end = note.end
        for later in ordered[i + 1 :]:
            if later.onset > note.onset:
                end = min(end, later.onset)
                break
        if end > note.onset:
            out.append(NoteEvent(note.onset, end - note.onset, note.pitch))
    # same-onset stacks keep only the first (lowest) pitch
    deduped: list[NoteEvent] = []
    for note in out:
        if deduped and note.onset == deduped[-1].onset:
            continue
        deduped.append(note)
    return deduped
