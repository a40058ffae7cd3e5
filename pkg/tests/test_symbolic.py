import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmoneval.errors import EmptyInputError, InvalidTrainingItemError
from harmoneval.symbolic import (
    KS_MAJOR_PROFILE,
    KS_MINOR_PROFILE,
    ChordQuality,
    ChordSpan,
    HarmonizationGrid,
    LeadSheet,
    Melody,
    NoteEvent,
    NoteVector,
    PitchClass,
    decode_chord,
    encode_chord,
    encode_leadsheet,
    encode_segment,
    estimate_key,
    parse_note_name,
    segment_melody,
)

from conftest import BAR, PPQ, figure_piece, melody_from_steps, random_leadsheet

G, C, D, Eb, Bb = (PitchClass(p) for p in (7, 0, 2, 3, 10))


class TestChordCodec:
    def test_paper_worked_example(self):
        assert encode_chord(G, G, ChordQuality.MINOR) == 1

    def test_zero_distance_major(self):
        assert encode_chord(C, C, ChordQuality.MAJOR) == 0

    def test_paper_encoding_list(self):
        assert encode_chord(G, D, ChordQuality.MINOR) == 29
        assert encode_chord(G, Eb, ChordQuality.MAJOR) == 32
        assert encode_chord(G, Bb, ChordQuality.MAJOR) == 12

    def test_decode_examples(self):
        assert decode_chord(G, 1) == (G, ChordQuality.MINOR)
        assert decode_chord(C, 0) == (C, ChordQuality.MAJOR)

    def test_roundtrip_all_576(self):
        for tonic in range(12):
            for code in range(48):
                root, quality = decode_chord(PitchClass(tonic), code)
                assert encode_chord(PitchClass(tonic), root, quality) == code

    def test_decode_out_of_range(self):
        with pytest.raises(ValueError):
            decode_chord(C, 48)
        with pytest.raises(ValueError):
            decode_chord(C, -1)

    @given(tonic=st.integers(0, 11), root=st.integers(0, 11), quality=st.integers(0, 3))
    def test_code_always_in_range(self, tonic, root, quality):
        code = encode_chord(PitchClass(tonic), PitchClass(root), ChordQuality(quality))
        assert 0 <= code <= 47


def _ks_oracle(melody):
    """Independent key estimate: numpy corrcoef over all 24 keys."""
    hist = np.zeros(12)
    for note in melody.notes:
        hist[note.pitch % 12] += note.duration
    best = None
    for tonic in range(12):
        rotated = np.array([hist[(tonic + i) % 12] for i in range(12)])
        for mode_rank, profile in enumerate((KS_MAJOR_PROFILE, KS_MINOR_PROFILE)):
            if rotated.std() == 0:
                r = 0.0
            else:
                r = float(np.corrcoef(rotated, np.array(profile))[0, 1])
            key = (-r, tonic, mode_rank)
            if best is None or key < best:
                best = key
    return best[1]


class TestKeyEstimation:
    def test_c_major_scale(self):
        scale = melody_from_steps([(60 + s, PPQ) for s in (0, 2, 4, 5, 7, 9, 11, 12)])
        assert estimate_key(scale) == 0
        assert _ks_oracle(scale) == 0

    def test_declared_tonic_short_circuits(self):
        scale = melody_from_steps(
            [(60 + s, PPQ) for s in (0, 2, 4, 5, 7, 9, 11, 12)], tonic=7
        )
        assert estimate_key(scale) == 7

    def test_matches_oracle_on_random_melodies(self, rng):
        from conftest import random_melody

        for _ in range(50):
            melody = random_melody(rng)
            assert estimate_key(melody) == _ks_oracle(melody)

    def test_transposition_covariance(self, rng):
        from conftest import random_melody

        for _ in range(10):
            melody = random_melody(rng, max_pitch=90)
            base = estimate_key(melody)
            for shift in range(12):
                assert estimate_key(melody.transposed(shift)) == (base + shift) % 12

    def test_empty_melody(self):
        with pytest.raises(EmptyInputError):
            estimate_key(Melody(notes=()))


class TestSegmentation:
    def test_two_bars_one_chord_per_bar(self):
        melody = melody_from_steps([(60, BAR), (62, BAR)])
        grid = HarmonizationGrid.for_melody(melody, chords_per_bar=1)
        assert grid.N == 2
        assert len(segment_melody(melody, grid)) == 2

    def test_two_bars_two_chords_per_bar(self):
        melody = melody_from_steps([(60, BAR), (62, BAR)])
        grid = HarmonizationGrid.for_melody(melody, chords_per_bar=2)
        assert grid.N == 4
        assert len(segment_melody(melody, grid)) == 4

    def test_note_spanning_bar_boundary_in_both_segments(self):
        note = NoteEvent(onset=BAR // 2, duration=BAR, pitch=60)
        melody = Melody(notes=(note,), ppq=PPQ)
        grid = HarmonizationGrid.for_melody(melody, chords_per_bar=1)
        segments = segment_melody(melody, grid)
        assert segments == [{note}, {note}]

    def test_note_ending_exactly_at_boundary_stays_out_of_next(self):
        note = NoteEvent(onset=0, duration=BAR, pitch=60)
        tail = NoteEvent(onset=BAR, duration=BAR, pitch=62)
        melody = Melody(notes=(note, tail), ppq=PPQ)
        grid = HarmonizationGrid.for_melody(melody, chords_per_bar=1)
        assert segment_melody(melody, grid) == [{note}, {tail}]

    def test_segment_count_law(self, rng):
        from conftest import random_melody

        for _ in range(20):
            melody = random_melody(rng, bars=rng.randint(1, 6))
            cpb = rng.choice([1, 2, 4])
            grid = HarmonizationGrid.for_melody(melody, cpb)
            assert grid.N == melody.bar_count() * cpb
            assert len(segment_melody(melody, grid)) == grid.N

    def test_partial_final_bar_rounds_up(self):
        melody = melody_from_steps([(60, BAR), (62, PPQ)])
        assert melody.bar_count() == 2

    def test_inconsistent_grid_rejected(self):
        melody = melody_from_steps([(60, BAR)])
        with pytest.raises(ValueError):
            segment_melody(melody, HarmonizationGrid(T=3, chords_per_bar=1))

    def test_chords_per_bar_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            HarmonizationGrid(T=2, chords_per_bar=3)


class TestNoteVectorEncoding:
    def test_paper_first_window(self):
        notes = {NoteEvent(0, 10, 67), NoteEvent(10, 10, 70), NoteEvent(20, 10, 69)}
        vector = encode_segment(G, notes)
        assert vector.bits == (1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0)

    def test_paper_second_window(self):
        notes = {NoteEvent(0, 10, 62), NoteEvent(10, 10, 65)}
        vector = encode_segment(G, notes)
        assert vector.bits == (0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0)

    def test_empty_segment_is_zero_vector(self):
        assert encode_segment(C, set()).bits == (0,) * 12

    def test_duplicate_pitch_classes_idempotent(self):
        notes = {NoteEvent(0, 10, 60), NoteEvent(10, 10, 72), NoteEvent(20, 10, 48)}
        assert sum(encode_segment(C, notes).bits) == 1

    @given(
        tonic=st.integers(0, 11),
        pitches=st.sets(st.integers(0, 127), min_size=0, max_size=16),
    )
    @settings(max_examples=200)
    def test_many_hot_soundness(self, tonic, pitches):
        notes = {NoteEvent(i * 10, 10, p) for i, p in enumerate(sorted(pitches))}
        bits = encode_segment(PitchClass(tonic), notes).bits
        distances = {(p - tonic) % 12 for p in pitches}
        assert {i for i, b in enumerate(bits) if b} == distances

    def test_note_vector_validation(self):
        with pytest.raises(ValueError):
            NoteVector((0,) * 11)
        with pytest.raises(ValueError):
            NoteVector((0,) * 11 + (2,))


class TestLeadSheetEncoding:
    def test_figure_piece_labels(self):
        sheet = figure_piece()
        grid = HarmonizationGrid.for_melody(sheet.melody, 1)
        encoded = encode_leadsheet(sheet, grid)
        assert encoded.Y == (1, 29, 32, 12)

    def test_figure_piece_vectors(self):
        sheet = figure_piece()
        grid = HarmonizationGrid.for_melody(sheet.melody, 1)
        encoded = encode_leadsheet(sheet, grid)
        assert [v.bits for v in encoded.X] == [
            (1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0),
            (0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0),
            (1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0),
            (0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 0),
        ]

    def test_figure_piece_key_estimated_as_g(self):
        sheet = figure_piece()
        undeclared = Melody(
            notes=sheet.melody.notes, ppq=sheet.melody.ppq,
            time_signature=sheet.melody.time_signature,
        )
        assert estimate_key(undeclared) == 7

    def test_transposition_invariance_figure_piece(self):
        sheet = figure_piece()
        grid = HarmonizationGrid.for_melody(sheet.melody, 1)
        base = encode_leadsheet(sheet, grid)
        for shift in range(12):
            shifted = encode_leadsheet(sheet.transposed(shift), grid)
            assert [v.bits for v in shifted.X] == [v.bits for v in base.X]
            assert shifted.Y == base.Y

    def test_transposition_invariance_random_sheets(self, rng):
        for _ in range(10):
            sheet = random_leadsheet(rng, tonic=rng.randrange(12))
            grid = HarmonizationGrid.for_melody(sheet.melody, 1)
            base = encode_leadsheet(sheet, grid)
            for shift in range(0, 12, 3):
                shifted = encode_leadsheet(sheet.transposed(shift), grid)
                assert shifted.X == base.X
                assert shifted.Y == base.Y

    def test_single_bar_single_chord(self):
        melody = melody_from_steps([(64, BAR)], tonic=0)
        sheet = LeadSheet(
            melody=melody,
            chords=(ChordSpan(0, C, ChordQuality.MAJOR),),
            declared_tonic=C,
        )
        encoded = encode_leadsheet(sheet, HarmonizationGrid.for_melody(melody, 1))
        assert len(encoded.X) == len(encoded.Y) == 1
        assert encoded.Y == (0,)

    def test_no_chords_rejected(self):
        melody = melody_from_steps([(64, BAR)])
        sheet = LeadSheet(melody=melody, chords=())
        with pytest.raises(InvalidTrainingItemError):
            encode_leadsheet(sheet, HarmonizationGrid.for_melody(melody, 1))

    def test_unsupported_chord_window_skipped(self, caplog):
        melody = melody_from_steps([(64, BAR), (65, BAR)], tonic=0)
        sheet = LeadSheet(
            melody=melody,
            chords=(
                ChordSpan(0, C, ChordQuality.MAJOR),
                ChordSpan(BAR, PitchClass(5), None, symbol="Fsus4"),
            ),
            declared_tonic=C,
        )
        with caplog.at_level("WARNING"):
            encoded = encode_leadsheet(sheet, HarmonizationGrid.for_melody(melody, 1))
        assert len(encoded.X) == len(encoded.Y) == 1
        assert any("Fsus4" in message for message in caplog.messages)

    def test_rest_window_kept_as_zero_vector(self):
        melody = melody_from_steps([(64, BAR), (None, BAR), (65, BAR)], tonic=0)
        sheet = LeadSheet(
            melody=melody,
            chords=(ChordSpan(0, C, ChordQuality.MAJOR),),
            declared_tonic=C,
        )
        encoded = encode_leadsheet(sheet, HarmonizationGrid.for_melody(melody, 1))
        assert len(encoded.X) == 3
        assert encoded.X[1].bits == (0,) * 12

    def test_chord_governs_from_onset_to_next(self):
        melody = melody_from_steps([(60, BAR), (62, BAR), (64, BAR)], tonic=0)
        sheet = LeadSheet(
            melody=melody,
            chords=(
                ChordSpan(0, C, ChordQuality.MAJOR),
                ChordSpan(2 * BAR, G, ChordQuality.MAJOR),
            ),
            declared_tonic=C,
        )
        encoded = encode_leadsheet(sheet, HarmonizationGrid.for_melody(melody, 1))
        assert encoded.Y == (0, 0, 4 * 7)


class TestDomainValidation:
    def test_pitch_class_range(self):
        with pytest.raises(ValueError):
            PitchClass(12)
        assert PitchClass.from_midi(67) == 7

    def test_note_event_validation(self):
        with pytest.raises(ValueError):
            NoteEvent(onset=-1, duration=10, pitch=60)
        with pytest.raises(ValueError):
            NoteEvent(onset=0, duration=0, pitch=60)
        with pytest.raises(ValueError):
            NoteEvent(onset=0, duration=10, pitch=128)

    def test_melody_rejects_overlap(self):
        with pytest.raises(ValueError):
            Melody(notes=(NoteEvent(0, 100, 60), NoteEvent(50, 100, 62)))

    def test_leadsheet_rejects_unsorted_chords(self):
        melody = melody_from_steps([(60, BAR)])
        with pytest.raises(ValueError):
            LeadSheet(
                melody=melody,
                chords=(
                    ChordSpan(100, C, ChordQuality.MAJOR),
                    ChordSpan(100, G, ChordQuality.MAJOR),
                ),
            )

    def test_note_names(self):
        assert parse_note_name("Bb") == 10
        assert parse_note_name("f#") == 6
        assert parse_note_name("E♭") == 3
        with pytest.raises(ValueError):
            parse_note_name("H")
