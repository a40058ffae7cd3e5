"""Reading and writing melodies and lead sheets.

Lead sheets are UTF-8 JSON documents::

    {
      "ppq": 480,
      "time_signature": "4/4",
      "key": {"tonic": "G", "mode": "minor"},
      "notes":  [{"onset": 0, "duration": 480, "pitch": 67}, ...],
      "chords": [{"onset": 0, "root": "G", "quality": "minor"}, ...]
    }

``key`` is optional; when present its tonic becomes the declared tonic (the
mode is informational).  A melody file is the same document without
``chords``, or a Standard MIDI File whose first non-empty track is read as a
monophonic melody (overlapping notes truncated at the next onset).

Chord qualities beyond the four triads are reduced to their root-position
triad when possible (sevenths, sixths); anything else (sus chords, power
chords) is kept with a null quality so encoding can skip the windows it
governs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

from .symbolic import (
    ChordQuality,
    ChordSpan,
    LeadSheet,
    Melody,
    NoteEvent,
    PitchClass,
    note_name,
    parse_note_name,
)

PathLike = Union[str, Path]

_QUALITY_ALIASES = {
    "major": ChordQuality.MAJOR,
    "maj": ChordQuality.MAJOR,
    "": ChordQuality.MAJOR,
    "minor": ChordQuality.MINOR,
    "min": ChordQuality.MINOR,
    "m": ChordQuality.MINOR,
    "diminished": ChordQuality.DIMINISHED,
    "dim": ChordQuality.DIMINISHED,
    "augmented": ChordQuality.AUGMENTED,
    "aug": ChordQuality.AUGMENTED,
    # extensions dropped, root-position triad kept
    "major7": ChordQuality.MAJOR,
    "maj7": ChordQuality.MAJOR,
    "dominant7": ChordQuality.MAJOR,
    "dom7": ChordQuality.MAJOR,
    "7": ChordQuality.MAJOR,
    "6": ChordQuality.MAJOR,
    "minor7": ChordQuality.MINOR,
    "min7": ChordQuality.MINOR,
    "m7": ChordQuality.MINOR,
    "m6": ChordQuality.MINOR,
    "diminished7": ChordQuality.DIMINISHED,
    "dim7": ChordQuality.DIMINISHED,
    "m7b5": ChordQuality.DIMINISHED,
    "augmented7": ChordQuality.AUGMENTED,
    "aug7": ChordQuality.AUGMENTED,
}


def parse_chord_quality(symbol: str) -> Optional[ChordQuality]:
    """Triad quality for a chord symbol, or None when it cannot be reduced."""
    return _QUALITY_ALIASES.get(symbol.strip().lower())


def _parse_time_signature(value) -> tuple[int, int]:
    if isinstance(value, str):
        num, _, den = value.partition("/")
        return (int(num), int(den))
    num, den = value
    return (int(num), int(den))


def _parse_key(doc: dict) -> Optional[PitchClass]:
    key = doc.get("key")
    if not key:
        return None
    return parse_note_name(key["tonic"])


def _parse_notes(doc: dict) -> tuple[NoteEvent, ...]:
    return tuple(
        NoteEvent(onset=int(n["onset"]), duration=int(n["duration"]), pitch=int(n["pitch"]))
        for n in sorted(doc.get("notes", []), key=lambda n: int(n["onset"]))
    )


def melody_from_dict(doc: dict) -> Melody:
    return Melody(
        notes=_parse_notes(doc),
        ppq=int(doc.get("ppq", 480)),
        time_signature=_parse_time_signature(doc.get("time_signature", "4/4")),
        declared_tonic=_parse_key(doc),
    )


def leadsheet_from_dict(doc: dict) -> LeadSheet:
    melody = melody_from_dict(doc)
    chords = []
    for c in sorted(doc.get("chords", []), key=lambda c: int(c["onset"])):
        symbol = str(c.get("quality", "major"))
        chords.append(
            ChordSpan(
                onset=int(c["onset"]),
                root=parse_note_name(c["root"]),
                quality=parse_chord_quality(symbol),
                symbol=f"{c['root']}{symbol and ' ' + symbol}",
            )
        )
    return LeadSheet(melody=melody, chords=tuple(chords), declared_tonic=melody.declared_tonic)


def leadsheet_to_dict(sheet: LeadSheet) -> dict:
    doc: dict = {
        "ppq": sheet.melody.ppq,
        "time_signature": f"{sheet.melody.time_signature[0]}/{sheet.melody.time_signature[1]}",
    }
    if sheet.declared_tonic is not None:
        doc["key"] = {"tonic": note_name(sheet.declared_tonic)}
    doc["notes"] = [
        {"onset": n.onset, "duration": n.duration, "pitch": n.pitch}
        for n in sheet.melody.notes
    ]
    doc["chords"] = [
        {
            "onset": c.onset,
            "root": note_name(c.root),
            "quality": c.quality.name.lower() if c.quality is not None else c.symbol,
        }
        for c in sheet.chords
    ]
    return doc


def _looks_like_midi(path: Path) -> bool:
    if path.suffix.lower() in (".mid", ".midi", ".smf"):
        return True
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == b"MThd"
    except OSError:
        return False


def load_melody(path: PathLike) -> Melody:
    """Load a melody from a JSON document or a Standard MIDI File."""
    path = Path(path)
    if _looks_like_midi(path):
        from .midi import melody_from_smf

        return melody_from_smf(path.read_bytes())
    with open(path, encoding="utf-8") as fh:
        return melody_from_dict(json.load(fh))


def load_leadsheet(path: PathLike) -> LeadSheet:
    with open(Path(path), encoding="utf-8") as fh:
        return leadsheet_from_dict(json.load(fh))


def save_leadsheet(sheet: LeadSheet, path: PathLike) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(leadsheet_to_dict(sheet), fh, indent=2)
        fh.write("\n")


def load_corpus(directory: PathLike) -> list[LeadSheet]:
    """All *.json lead sheets under a directory, sorted by filename."""
    directory = Path(directory)
    sheets = []
    for path in sorted(directory.glob("*.json")):
        sheets.append(load_leadsheet(path))
    return sheets
