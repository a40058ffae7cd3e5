"""Melody harmonization, stimulus arrangement, listening study, and rank analysis."""

from .arrange import (
    Arrangement,
    ArrangementTrack,
    Modality,
    RenderConfig,
    VoicingChart,
    arrange_group,
    arrange_piano,
    builtin_voicing_chart,
)
from .midi import export_midi, melody_from_smf, parse_smf, write_smf
from .network import (
    Dataset,
    MlpModel,
    TrainConfig,
    build_dataset,
    forward,
    harmonize,
    load_model,
    save_model,
    train,
)
from .stats import (
    AnovaTable,
    ClmModel,
    MwuResult,
    Observation,
    ObservationTable,
    analyze_study,
    anova_lr,
    binarize_musicianship,
    fit_clm,
    interaction_probabilities,
    mann_whitney_u,
    rank_distribution,
)
from .study import (
    InclusionDecision,
    ParticipantRecord,
    Session,
    StimulusSpec,
    StudyConfig,
    StudyEngine,
)
from .symbolic import (
    ChordLabel,
    ChordQuality,
    ChordSpan,
    EncodedSequence,
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
    segment_melody,
)

__version__ = "0.1.0"
