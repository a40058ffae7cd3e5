import random

import pytest

from harmoneval.symbolic import (
    ChordQuality,
    ChordSpan,
    LeadSheet,
    Melody,
    NoteEvent,
    PitchClass,
)

PPQ = 480
BAR = 4 * PPQ


def melody_from_steps(steps, ppq=PPQ, tonic=None, time_signature=(4, 4)):
    """Build a melody from (pitch, duration) pairs laid end to end."""
    notes = []
    tick = 0
    for pitch, duration in steps:
        if pitch is not None:
            notes.append(NoteEvent(onset=tick, duration=duration, pitch=pitch))
        tick += duration
    return Melody(
        notes=tuple(notes),
        ppq=ppq,
        time_signature=time_signature,
        declared_tonic=PitchClass(tonic) if tonic is not None else None,
    )


def figure_piece():
    """The four-bar G-minor reference piece used across encoding tests.

    Bar 1: G4 Bb4 A4 under G minor; bar 2: D4 F4 under D minor;
    bar 3: G4 Eb4 F4 under Eb major; bar 4: D4 Eb4 F4 under Bb major.
    """
    melody = melody_from_steps(
        [
            (67, 1280), (70, 320), (69, 320),
            (62, 1440), (65, 480),
            (67, 1280), (63, 320), (65, 320),
            (62, 960), (63, 480), (65, 480),
        ],
        tonic=7,
    )
    chords = (
        ChordSpan(0 * BAR, PitchClass(7), ChordQuality.MINOR),
        ChordSpan(1 * BAR, PitchClass(2), ChordQuality.MINOR),
        ChordSpan(2 * BAR, PitchClass(3), ChordQuality.MAJOR),
        ChordSpan(3 * BAR, PitchClass(10), ChordQuality.MAJOR),
    )
    return LeadSheet(melody=melody, chords=chords, declared_tonic=PitchClass(7))


def random_melody(rng: random.Random, bars=4, tonic=None, max_pitch=100):
    """Random monophonic melody filling `bars` bars exactly."""
    steps = []
    remaining = bars * BAR
    while remaining > 0:
        duration = rng.choice([PPQ // 2, PPQ, 2 * PPQ])
        duration = min(duration, remaining)
        pitch = rng.randint(48, max_pitch) if rng.random() > 0.1 else None
        steps.append((pitch, duration))
        remaining -= duration
    if all(p is None for p, _ in steps):
        steps[0] = (60, steps[0][1])
    return melody_from_steps(steps, tonic=tonic)


def random_leadsheet(rng: random.Random, bars=4, tonic=None):
    melody = random_melody(rng, bars=bars, tonic=tonic)
    chords = tuple(
        ChordSpan(
            onset=bar * BAR,
            root=PitchClass(rng.randrange(12)),
            quality=ChordQuality(rng.randrange(4)),
        )
        for bar in range(bars)
    )
    declared = PitchClass(tonic) if tonic is not None else None
    return LeadSheet(melody=melody, chords=chords, declared_tonic=declared)


@pytest.fixture
def rng():
    return random.Random(20240817)
