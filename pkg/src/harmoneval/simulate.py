"""Synthetic respondents, used to exercise the whole pipeline at desk scale.

Each simulated participant runs through the real study engine (balanced
pages, randomized orders, finalize rules).  Rankings come from a latent
utility per heard stimulus::

    u = algorithm_effect * is_A * (1 + modality_amplification * is_group)
        + Normal(0, noise_sd)

sorted descending, so rank 1 goes to the highest utility.  A positive
``algorithm_effect`` favors algorithm A; a positive amplification widens
the A-B gap under the group modality (and leaves piano-solo pages at the
base effect).  Expertise is sampled uniformly from 1..6; everyone answers
the attention check correctly and takes longer than the duration floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrange import Modality
from .study import ParticipantRecord, StimulusSpec, StudyConfig, StudyEngine


@dataclass(frozen=True)
class PreferenceModel:
    algorithm_effect: float = 1.5
    modality_amplification: float = 1.0
    noise_sd: float = 1.0

    def utility_mean(self, algorithm: str, modality: Modality) -> float:
        if algorithm != "A":
            return 0.0
        amplifier = 1.0 + (
            self.modality_amplification if modality is Modality.GROUP else 0.0
        )
        return self.algorithm_effect * amplifier


def synthetic_study_config(min_duration_s: int = 210) -> StudyConfig:
    """Eight placeholder stimuli (A1..A4, B1..B4) with dummy audio refs."""
    stimuli = tuple(
        StimulusSpec(
            id=f"{tag}{k}",
            algorithm=tag,
            audio={m.value: f"/audio/{tag}{k}_{m.value}.mp3" for m in Modality},
        )
        for tag in ("A", "B")
        for k in range(1, 5)
    )
    return StudyConfig(stimuli=stimuli, min_duration_s=min_duration_s)


class _Clock:
    def __init__(self, start: float = 1_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now


def simulate_study(
    participants: int,
    seed: int = 0,
    preference: PreferenceModel | None = None,
    config: StudyConfig | None = None,
) -> StudyEngine:
    """Run `participants` synthetic respondents and return the filled engine."""
    if participants <= 0:
        raise ValueError("participants must be > 0")
    preference = preference or PreferenceModel()
    config = config or synthetic_study_config()
    clock = _Clock()
    engine = StudyEngine(config, clock=clock, seed=seed)
    rng = np.random.default_rng(seed)
    algorithm_of = {s.id: s.algorithm for s in config.stimuli}

    for _ in range(participants):
        session = engine.create_session()
        for page in (1, 2):
            modality = session.modality_order[page - 1]
            ids = session.pages[page - 1]
            utilities = np.array(
                [preference.utility_mean(algorithm_of[i], modality) for i in ids]
            ) + rng.normal(0.0, preference.noise_sd, size=len(ids))
            ordered = [ids[j] for j in np.argsort(-utilities, kind="stable")]
            engine.submit_ranking(session.id, page, ordered)
        clock.now += config.min_duration_s + 90.0
        record = ParticipantRecord(
            expertise=int(rng.integers(1, 7)),
            attention_answer=config.attention_expected,
        )
        engine.finalize(session.id, record)
    return engine
