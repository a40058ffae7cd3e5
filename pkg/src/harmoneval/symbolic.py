"""Symbolic domain types and tonic-relative encodings.

Melodies are monophonic tick-based note lists.  Chords are root-position
triads over the chromatic scale in four qualities, addressed by an integer
code ``4 * d + quality`` where ``d`` is the semitone distance from the tonic
to the chord root.  Notes are encoded per segment as 12-dimensional many-hot
vectors indexed by semitone distance from the tonic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from math import ceil
from typing import Iterable, Optional, Sequence

from .errors import EmptyInputError, InvalidTrainingItemError

logger = logging.getLogger(__name__)

NUM_CHORD_CODES = 48
NOTE_VECTOR_SIZE = 12

NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

_NAME_TO_PC = {
    "C": 0, "B#": 0, "C#": 1, "Db": 1, "D": 2, "C##": 2, "Ebb": 2,
    "D#": 3, "Eb": 3, "E": 4, "Fb": 4, "E#": 5, "F": 5, "F#": 6,
    "Gb": 6, "G": 7, "F##": 7, "Abb": 7, "G#": 8, "Ab": 8, "A": 9,
    "A#": 10, "Bb": 10, "B": 11, "Cb": 11,
}


def parse_note_name(name: str) -> "PitchClass":
    """Pitch class of a note name like 'G', 'Bb' or 'F#' (unicode accidentals ok)."""
    cleaned = name.strip().replace("♭", "b").replace("♯", "#")
    if cleaned:
        cleaned = cleaned[0].upper() + cleaned[1:]
    try:
        return PitchClass(_NAME_TO_PC[cleaned])
    except KeyError:
        raise ValueError(f"unknown note name: {name!r}") from None


def note_name(pc: int) -> str:
    return NOTE_NAMES[pc % 12]


class PitchClass(int):
    """A semitone class 0-11, with 0 = C."""

    def __new__(cls, value: int) -> "PitchClass":
        value = int(value)
        if not 0 <= value <= 11:
            raise ValueError(f"pitch class must be in 0..11, got {value}")
        return super().__new__(cls, value)

    @classmethod
    def from_midi(cls, pitch: int) -> "PitchClass":
        return cls(pitch % 12)

    def transposed(self, semitones: int) -> "PitchClass":
        return PitchClass((int(self) + semitones) % 12)


class ChordQuality(IntEnum):
    MAJOR = 0
    MINOR = 1
    DIMINISHED = 2
    AUGMENTED = 3


# Third/fifth offsets (semitones above the root) per quality.
TRIAD_INTERVALS = {
    ChordQuality.MAJOR: (4, 7),
    ChordQuality.MINOR: (3, 7),
    ChordQuality.DIMINISHED: (3, 6),
    ChordQuality.AUGMENTED: (4, 8),
}


@dataclass(frozen=True)
class ChordLabel:
    """A triad as (semitone distance from tonic, quality)."""

    d: int
    quality: ChordQuality

    def __post_init__(self):
        if not 0 <= self.d <= 11:
            raise ValueError(f"chord distance must be in 0..11, got {self.d}")

    @property
    def code(self) -> int:
        return 4 * self.d + int(self.quality)

    @classmethod
    def from_code(cls, code: int) -> "ChordLabel":
        if not 0 <= code <= NUM_CHORD_CODES - 1:
            raise ValueError(f"chord code must be in 0..47, got {code}")
        return cls(d=code // 4, quality=ChordQuality(code % 4))


@dataclass(frozen=True)
class NoteEvent:
    """One note: onset and duration in ticks, MIDI pitch."""

    onset: int
    duration: int
    pitch: int

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError(f"onset must be >= 0, got {self.onset}")
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch must be in 0..127, got {self.pitch}")

    @property
    def end(self) -> int:
        return self.onset + self.duration

    @property
    def pitch_class(self) -> PitchClass:
        return PitchClass.from_midi(self.pitch)


@dataclass(frozen=True)
class Melody:
    """A monophonic melody on a tick grid."""

    notes: tuple[NoteEvent, ...]
    ppq: int = 480
    time_signature: tuple[int, int] = (4, 4)
    declared_tonic: Optional[PitchClass] = None

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        if self.ppq <= 0:
            raise ValueError(f"ppq must be > 0, got {self.ppq}")
        num, den = self.time_signature
        if num <= 0 or den <= 0:
            raise ValueError(f"bad time signature {self.time_signature}")
        prev_end = None
        for note in self.notes:
            if prev_end is not None and note.onset < prev_end:
                raise ValueError(
                    f"melody must be monophonic and onset-sorted; "
                    f"note at {note.onset} overlaps previous note ending at {prev_end}"
                )
            prev_end = note.end

    @property
    def span_ticks(self) -> int:
        return self.notes[-1].end if self.notes else 0

    @property
    def bar_ticks(self) -> Fraction:
        num, den = self.time_signature
        return Fraction(self.ppq * 4 * num, den)

    def bar_count(self) -> int:
        """Bar count T; a trailing or pickup partial bar counts as a full bar."""
        if not self.notes:
            return 0
        return max(1, ceil(Fraction(self.span_ticks) / self.bar_ticks))

    def transposed(self, semitones: int) -> "Melody":
        notes = tuple(
            NoteEvent(n.onset, n.duration, n.pitch + semitones) for n in self.notes
        )
        tonic = (
            self.declared_tonic.transposed(semitones)
            if self.declared_tonic is not None
            else None
        )
        return Melody(notes, self.ppq, self.time_signature, tonic)


@dataclass(frozen=True)
class ChordSpan:
    """A chord symbol at a tick onset, governing until the next chord.

    ``quality`` is None for symbols outside the triad vocabulary; such spans
    are kept so the windows they govern can be skipped during encoding.
    """

    onset: int
    root: PitchClass
    quality: Optional[ChordQuality]
    symbol: str = ""

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError(f"chord onset must be >= 0, got {self.onset}")


@dataclass(frozen=True)
class LeadSheet:
    """A melody plus a chord track."""

    melody: Melody
    chords: tuple[ChordSpan, ...]
    declared_tonic: Optional[PitchClass] = None

    def __post_init__(self):
        object.__setattr__(self, "chords", tuple(self.chords))
        onsets = [c.onset for c in self.chords]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("chord onsets must be strictly increasing")

    @property
    def tonic(self) -> PitchClass:
        if self.declared_tonic is not None:
            return self.declared_tonic
        return estimate_key(self.melody)

    def transposed(self, semitones: int) -> "LeadSheet":
        chords = tuple(
            ChordSpan(c.onset, c.root.transposed(semitones), c.quality, c.symbol)
            for c in self.chords
        )
        tonic = (
            self.declared_tonic.transposed(semitones)
            if self.declared_tonic is not None
            else None
        )
        return LeadSheet(self.melody.transposed(semitones), chords, tonic)


@dataclass(frozen=True)
class HarmonizationGrid:
    """How many chord windows a melody of T bars is split into."""

    T: int
    chords_per_bar: int = 1

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"bar count must be > 0, got {self.T}")
        c = self.chords_per_bar
        if c < 1 or (c & (c - 1)) != 0:
            raise ValueError(f"chords_per_bar must be a power of two >= 1, got {c}")

    @property
    def N(self) -> int:
        return self.T * self.chords_per_bar

    @classmethod
    def for_melody(cls, melody: Melody, chords_per_bar: int = 1) -> "HarmonizationGrid":
        T = melody.bar_count()
        if T == 0:
            raise EmptyInputError("cannot build a grid for an empty melody")
        return cls(T=T, chords_per_bar=chords_per_bar)

    def window_bounds(self, melody: Melody) -> list[tuple[Fraction, Fraction]]:
        """Half-open [start, end) tick bounds of the N chord windows."""
        width = melody.bar_ticks / self.chords_per_bar
        return [(i * width, (i + 1) * width) for i in range(self.N)]


@dataclass(frozen=True)
class NoteVector:
    """12 many-hot bits indexed by semitone distance from the tonic."""

    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if len(self.bits) != NOTE_VECTOR_SIZE:
            raise ValueError(f"note vector needs 12 bits, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("note vector bits must be 0 or 1")

    @classmethod
    def zero(cls) -> "NoteVector":
        return cls((0,) * NOTE_VECTOR_SIZE)


@dataclass(frozen=True)
class EncodedSequence:
    """Paired many-hot note vectors and (optionally) chord codes."""

    X: tuple[NoteVector, ...]
    tonic: PitchClass
    Y: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "X", tuple(self.X))
        if self.Y is not None:
            object.__setattr__(self, "Y", tuple(self.Y))
            if len(self.X) != len(self.Y):
                raise ValueError(
                    f"X and Y lengths differ: {len(self.X)} vs {len(self.Y)}"
                )
            for y in self.Y:
                if not 0 <= y <= NUM_CHORD_CODES - 1:
                    raise ValueError(f"chord code out of range: {y}")


def encode_chord(tonic: PitchClass, root: PitchClass, quality: ChordQuality) -> int:
    """Chord code 4*d + quality with d the tonic-to-root semitone distance."""
    d = (int(root) - int(tonic)) % 12
    return 4 * d + int(quality)


def decode_chord(tonic: PitchClass, code: int) -> tuple[PitchClass, ChordQuality]:
    """Inverse of encode_chord for a given tonic."""
    label = ChordLabel.from_code(code)
    root = PitchClass((int(tonic) + label.d) % 12)
    return root, label.quality


# Krumhansl-Schmuckler key profiles (Krumhansl & Kessler probe-tone ratings),
# index 0 = tonic of the profile's key.
KS_MAJOR_PROFILE = (6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88)
KS_MINOR_PROFILE = (6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17)


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return sxy / (sxx * syy) ** 0.5


def duration_weighted_histogram(melody: Melody) -> list[float]:
    hist = [0.0] * 12
    for note in melody.notes:
        hist[int(note.pitch_class)] += note.duration
    return hist


def estimate_key(melody: Melody) -> PitchClass:
    """Tonic of the best-correlating major or minor key.

    A declared tonic on the melody short-circuits estimation.  Ties break
    toward the lower pitch class, then major over minor.
    """
    if melody.declared_tonic is not None:
        return melody.declared_tonic
    if not melody.notes:
        raise EmptyInputError("cannot estimate the key of an empty melody")
    hist = duration_weighted_histogram(melody)
    best: tuple[float, int, int] | None = None  # (-r, tonic, mode_rank)
    for tonic in range(12):
        rotated = [hist[(tonic + i) % 12] for i in range(12)]
        for mode_rank, profile in enumerate((KS_MAJOR_PROFILE, KS_MINOR_PROFILE)):
            r = _pearson(rotated, profile)
            key = (-r, tonic, mode_rank)
            if best is None or key < best:
                best = key
    return PitchClass(best[1])


def segment_melody(melody: Melody, grid: HarmonizationGrid) -> list[set[NoteEvent]]:
    """Split a melody into the grid's N windows.

    A note belongs to every window its half-open sounding interval overlaps;
    zero-length intersections do not count.
    """
    if grid.T != melody.bar_count():
        raise ValueError(
            f"grid has T={grid.T} but melody spans {melody.bar_count()} bars"
        )
    segments: list[set[NoteEvent]] = []
    for start, end in grid.window_bounds(melody):
        segments.append(
            {n for n in melody.notes if n.onset < end and n.end > start}
        )
    return segments


def encode_segment(tonic: PitchClass, notes: Iterable[NoteEvent]) -> NoteVector:
    """Many-hot vector of tonic distances present in a note set."""
    bits = [0] * NOTE_VECTOR_SIZE
    for note in notes:
        bits[(int(note.pitch_class) - int(tonic)) % 12] = 1
    return NoteVector(tuple(bits))


def _governing_chord(chords: Sequence[ChordSpan], window_start: Fraction) -> ChordSpan:
    # The chord sounding at the window start; the first chord is treated as
    # extending back to the start of the piece.
    active = chords[0]
    for chord in chords:
        if chord.onset <= window_start:
            active = chord
        else:
            break
    return active


def encode_leadsheet(sheet: LeadSheet, grid: HarmonizationGrid) -> EncodedSequence:
    """Encode a lead sheet into aligned (note vector, chord code) pairs.

    Windows governed by a chord outside the triad vocabulary are dropped
    (pairwise) with a warning, so the result may be shorter than grid.N.
    """
    if not sheet.chords:
        raise InvalidTrainingItemError("lead sheet has no chords")
    tonic = sheet.tonic
    segments = segment_melody(sheet.melody, grid)
    bounds = grid.window_bounds(sheet.melody)
    xs: list[NoteVector] = []
    ys: list[int] = []
    for (start, _end), notes in zip(bounds, segments):
        chord = _governing_chord(sheet.chords, start)
        if chord.quality is None:
            logger.warning(
                "skipping window at tick %s: unsupported chord %r",
                start,
                chord.symbol or chord.root,
            )
            continue
        xs.append(encode_segment(tonic, notes))
        ys.append(encode_chord(tonic, chord.root, chord.quality))
    return EncodedSequence(X=tuple(xs), tonic=tonic, Y=tuple(ys))
