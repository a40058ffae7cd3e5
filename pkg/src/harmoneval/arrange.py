"""Stimulus arrangements: piano solo and the fixed six-part group version.

The group arrangement doubles the melody on violin and flute, holds each
chord root on a cello, adds a fingerpicked and a strummed guitar reading the
chords from an open-position voicing chart, and marks every downbeat with a
close piano triad.  The strummed guitar's channel volume is 40% of full
scale; everything else plays at full volume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .errors import EmptyInputError, UnsupportedTimeSignatureError, UnvoicableChordError
from .symbolic import (
    TRIAD_INTERVALS,
    ChordQuality,
    ChordSpan,
    LeadSheet,
    Melody,
    NoteEvent,
    PitchClass,
    note_name,
    parse_note_name,
)


class Modality(str, Enum):
    PIANO_SOLO = "piano"
    GROUP = "group"


PIANO_TRACK = "piano"
GROUP_TRACK_NAMES = (
    "violin-melody",
    "flute-melody",
    "cello",
    "guitar-picked",
    "guitar-strummed",
    "piano-chords",
)

STRUMMED_VOLUME = round(0.40 * 127)  # == 51

DEFAULT_PROGRAMS: Mapping[str, int] = {
    PIANO_TRACK: 0,
    "violin-melody": 40,
    "flute-melody": 73,
    "cello": 42,
    "guitar-picked": 24,
    "guitar-strummed": 25,
    "piano-chords": 0,
}

DEFAULT_VOLUMES: Mapping[str, int] = {
    **{name: 127 for name in (PIANO_TRACK,) + GROUP_TRACK_NAMES},
    "guitar-strummed": STRUMMED_VOLUME,
}

_CELLO_OCTAVE_BASE = 36  # C2
_PIANO_OCTAVE_BASE = 60  # C4
_LOW_E = 40  # E2
_FLUTE_DOUBLING_CUTOFF = 72  # C5

# Strum hits per 4/4 measure as (beat offset, beats held): a folk
# quarter-quarter-eighth-eighth-quarter pattern.
STRUM_PATTERN = ((0.0, 1.0), (1.0, 1.0), (2.0, 0.5), (2.5, 0.5), (3.0, 1.0))


@dataclass(frozen=True)
class RenderConfig:
    tempo: float = 120.0
    ppq: int = 480
    programs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_PROGRAMS))
    volumes: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_VOLUMES))

    def __post_init__(self):
        if self.tempo <= 0:
            raise ValueError(f"tempo must be > 0, got {self.tempo}")
        if self.ppq <= 0:
            raise ValueError(f"ppq must be > 0, got {self.ppq}")
        for name, volume in self.volumes.items():
            if not 0 <= volume <= 127:
                raise ValueError(f"volume for {name!r} out of 0..127: {volume}")

    def program(self, track: str) -> int:
        return self.programs.get(track, DEFAULT_PROGRAMS.get(track, 0))

    def volume(self, track: str) -> int:
        return self.volumes.get(track, DEFAULT_VOLUMES.get(track, 127))


@dataclass(frozen=True)
class ArrangementTrack:
    name: str
    channel: int
    program: int
    volume: int
    notes: tuple[NoteEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))


@dataclass(frozen=True)
class Arrangement:
    """A multi-track symbolic score ready for MIDI export."""

    tracks: tuple[ArrangementTrack, ...]
    tempo: float
    ppq: int
    time_signature: tuple[int, int] = (4, 4)
    chords: tuple[ChordSpan, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        object.__setattr__(self, "chords", tuple(self.chords))

    def track(self, name: str) -> ArrangementTrack:
        for t in self.tracks:
            if t.name == name:
                return t
        raise KeyError(name)

    def rescaled(self, tempo: Optional[float] = None, ppq: Optional[int] = None) -> "Arrangement":
        """Copy with a new tempo and/or tick resolution (onsets rescaled)."""
        new_tempo = self.tempo if tempo is None else tempo
        new_ppq = self.ppq if ppq is None else ppq
        factor = Fraction(new_ppq, self.ppq)
        tracks = tuple(
            ArrangementTrack(
                t.name,
                t.channel,
                t.program,
                t.volume,
                tuple(
                    NoteEvent(
                        round(n.onset * factor),
                        max(1, round(n.duration * factor)),
                        n.pitch,
                    )
                    for n in t.notes
                ),
            )
            for t in self.tracks
        )
        chords = tuple(
            ChordSpan(round(c.onset * factor), c.root, c.quality, c.symbol)
            for c in self.chords
        )
        return Arrangement(tracks, new_tempo, new_ppq, self.time_signature, chords)


def _chord_key(root: PitchClass, quality: ChordQuality) -> tuple[int, ChordQuality]:
    return (int(root), quality)


def _chord_name(root: int, quality: ChordQuality) -> str:
    return f"{note_name(root)} {quality.name.lower()}"


def _triad_classes(root: int, quality: ChordQuality) -> set[int]:
    third, fifth = TRIAD_INTERVALS[quality]
    return {root % 12, (root + third) % 12, (root + fifth) % 12}


@dataclass(frozen=True)
class VoicingChart:
    """Per-triad guitar voicings and close piano triads."""

    guitar: Mapping[tuple[int, ChordQuality], tuple[int, ...]]
    close: Mapping[tuple[int, ChordQuality], tuple[int, ...]]

    def __post_init__(self):
        for (root, quality), pitches in self.guitar.items():
            classes = _triad_classes(root, quality)
            if any(p % 12 not in classes for p in pitches):
                raise ValueError(
                    f"voicing for {_chord_name(root, quality)} contains non-chord tones"
                )
            if list(pitches) != sorted(pitches):
                raise ValueError(
                    f"voicing for {_chord_name(root, quality)} is not ascending"
                )
            if pitches and not _LOW_E <= pitches[0] <= _LOW_E + 12:
                raise ValueError(
                    f"lowest voicing pitch for {_chord_name(root, quality)} "
                    f"must lie within E2..E3"
                )
        for (root, quality), pitches in self.close.items():
            classes = _triad_classes(root, quality)
            if any(p % 12 not in classes for p in pitches):
                raise ValueError(
                    f"close triad for {_chord_name(root, quality)} contains non-chord tones"
                )

    def guitar_voicing(self, root: PitchClass, quality: ChordQuality) -> tuple[int, ...]:
        try:
            return self.guitar[_chord_key(root, quality)]
        except KeyError:
            raise UnvoicableChordError(
                f"no guitar voicing for {_chord_name(root, quality)}"
            ) from None

    def close_triad(self, root: PitchClass, quality: ChordQuality) -> tuple[int, ...]:
        try:
            return self.close[_chord_key(root, quality)]
        except KeyError:
            raise UnvoicableChordError(
                f"no close triad for {_chord_name(root, quality)}"
            ) from None


# Standard open shapes, low string to high (E/A/D/G/C families).
_OPEN_SHAPES = {
    (4, ChordQuality.MAJOR): (40, 47, 52, 56, 59, 64),   # E
    (4, ChordQuality.MINOR): (40, 47, 52, 55, 59, 64),   # Em
    (9, ChordQuality.MAJOR): (45, 52, 57, 61, 64),       # A
    (9, ChordQuality.MINOR): (45, 52, 57, 60, 64),       # Am
    (2, ChordQuality.MAJOR): (50, 57, 62, 66),           # D
    (2, ChordQuality.MINOR): (50, 57, 62, 65),           # Dm
    (7, ChordQuality.MAJOR): (43, 47, 50, 55, 59, 67),   # G
    (0, ChordQuality.MAJOR): (48, 52, 55, 60, 64),       # C
}


def _fallback_voicing(root: int, quality: ChordQuality) -> tuple[int, ...]:
    base = root + 36
    if base <= _LOW_E:
        base += 12
    third, fifth = TRIAD_INTERVALS[quality]
    return (base, base + third, base + fifth)


def builtin_voicing_chart() -> VoicingChart:
    """Chart covering all 48 triads.

    Major/minor chords with a standard open shape get that shape; everything
    else falls back to a root-position close voicing just above E2.
    """
    guitar = {}
    close = {}
    for root in range(12):
        for quality in ChordQuality:
            key = (root, quality)
            guitar[key] = _OPEN_SHAPES.get(key, _fallback_voicing(root, quality))
            third, fifth = TRIAD_INTERVALS[quality]
            base = _PIANO_OCTAVE_BASE + root
            close[key] = (base, base + third, base + fifth)
    return VoicingChart(guitar=guitar, close=close)


def load_voicing_chart(path: str) -> VoicingChart:
    """Read a user chart: JSON mapping "Root quality" to a pitch list or to
    {"guitar": [...], "close": [...]}.  Missing entries fall back to the
    builtin chart."""
    base = builtin_voicing_chart()
    guitar = dict(base.guitar)
    close = dict(base.close)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    for name, value in raw.items():
        root_name, _, quality_name = name.partition(" ")
        key = (int(parse_note_name(root_name)), ChordQuality[quality_name.strip().upper()])
        if isinstance(value, dict):
            if "guitar" in value:
                guitar[key] = tuple(value["guitar"])
            if "close" in value:
                close[key] = tuple(value["close"])
        else:
            guitar[key] = tuple(value)
    return VoicingChart(guitar=guitar, close=close)


def _scaled_notes(notes: Sequence[NoteEvent], factor: Fraction, shift: int = 0) -> tuple[NoteEvent, ...]:
    return tuple(
        NoteEvent(round(n.onset * factor), max(1, round(n.duration * factor)), n.pitch + shift)
        for n in notes
    )


def arrange_piano(melody: Melody, config: Optional[RenderConfig] = None) -> Arrangement:
    """The piano-solo modality: the melody verbatim on a single grand piano track."""
    if not melody.notes:
        raise EmptyInputError("cannot arrange an empty melody")
    config = config or RenderConfig()
    factor = Fraction(config.ppq, melody.ppq)
    track = ArrangementTrack(
        name=PIANO_TRACK,
        channel=0,
        program=config.program(PIANO_TRACK),
        volume=config.volume(PIANO_TRACK),
        notes=_scaled_notes(melody.notes, factor),
    )
    return Arrangement(
        tracks=(track,),
        tempo=config.tempo,
        ppq=config.ppq,
        time_signature=melody.time_signature,
    )


def _active_chord(chords: Sequence[ChordSpan], tick: int) -> Optional[ChordSpan]:
    active = None
    for chord in chords:
        if chord.onset <= tick:
            active = chord
        else:
            break
    return active


def arrange_group(
    sheet: LeadSheet,
    chart: Optional[VoicingChart] = None,
    config: Optional[RenderConfig] = None,
) -> Arrangement:
    """The six-part group modality for a harmonized melody (4/4 only)."""
    melody = sheet.melody
    if not melody.notes:
        raise EmptyInputError("cannot arrange an empty melody")
    if not sheet.chords:
        raise EmptyInputError("group arrangement needs at least one chord")
    if melody.time_signature != (4, 4):
        raise UnsupportedTimeSignatureError(
            f"group arrangement supports only 4/4, got "
            f"{melody.time_signature[0]}/{melody.time_signature[1]}"
        )
    if any(c.quality is None for c in sheet.chords):
        unsupported = next(c for c in sheet.chords if c.quality is None)
        raise UnvoicableChordError(
            f"chord {unsupported.symbol or note_name(unsupported.root)!r} "
            f"is outside the triad vocabulary"
        )
    chart = chart or builtin_voicing_chart()
    config = config or RenderConfig()

    factor = Fraction(config.ppq, melody.ppq)
    ppq = config.ppq
    bar_ticks = ppq * 4
    T = melody.bar_count()
    piece_end = T * bar_ticks
    chords = tuple(
        ChordSpan(round(c.onset * factor), c.root, c.quality, c.symbol)
        for c in sheet.chords
    )

    violin = _scaled_notes(melody.notes, factor)
    mean_pitch = sum(n.pitch for n in melody.notes) / len(melody.notes)
    octave_up = mean_pitch < _FLUTE_DOUBLING_CUTOFF and all(
        n.pitch + 12 <= 127 for n in melody.notes
    )
    flute = _scaled_notes(melody.notes, factor, shift=12 if octave_up else 0)

    cello: list[NoteEvent] = []
    for i, chord in enumerate(chords):
        start = chord.onset
        end = chords[i + 1].onset if i + 1 < len(chords) else piece_end
        end = min(end, piece_end)
        if end > start:
            cello.append(NoteEvent(start, end - start, _CELLO_OCTAVE_BASE + int(chord.root)))

    piano_chords: list[NoteEvent] = []
    picked: list[NoteEvent] = []
    strummed: list[NoteEvent] = []
    for bar in range(T):
        bar_start = bar * bar_ticks
        downbeat_chord = _active_chord(chords, bar_start)
        if downbeat_chord is not None:
            for pitch in chart.close_triad(downbeat_chord.root, downbeat_chord.quality):
                piano_chords.append(NoteEvent(bar_start, ppq, pitch))
        for beat in range(4):
            tick = bar_start + beat * ppq
            chord = _active_chord(chords, tick)
            if chord is None:
                continue
            voicing = chart.guitar_voicing(chord.root, chord.quality)
            # fingerpicking: low, high, second-lowest, high across the beats
            pick_index = (0, -1, 1 if len(voicing) > 1 else 0, -1)[beat]
            picked.append(NoteEvent(tick, ppq, voicing[pick_index]))
        for beat_offset, beats_held in STRUM_PATTERN:
            tick = bar_start + round(beat_offset * ppq)
            chord = _active_chord(chords, tick)
            if chord is None:
                continue
            duration = max(1, round(beats_held * ppq))
            for pitch in chart.guitar_voicing(chord.root, chord.quality):
                strummed.append(NoteEvent(tick, duration, pitch))

    parts = {
        "violin-melody": violin,
        "flute-melody": flute,
        "cello": tuple(cello),
        "guitar-picked": tuple(picked),
        "guitar-strummed": tuple(strummed),
        "piano-chords": tuple(sorted(piano_chords, key=lambda n: (n.onset, n.pitch))),
    }
    tracks = tuple(
        ArrangementTrack(
            name=name,
            channel=channel,
            program=config.program(name),
            volume=config.volume(name),
            notes=tuple(sorted(parts[name], key=lambda n: (n.onset, n.pitch))),
        )
        for channel, name in enumerate(GROUP_TRACK_NAMES)
    )
    return Arrangement(
        tracks=tracks,
        tempo=config.tempo,
        ppq=config.ppq,
        time_signature=melody.time_signature,
        chords=chords,
    )
