"""Listening-study sessions: balanced random assignment, ranking collection,
exclusion rules, and export of the analysis table.

Each participant hears the eight stimuli over two pages of four, one page
per modality, two stimuli per algorithm on each page.  Page composition,
presentation order and modality order are all randomized.  Responses go to
an append-only record log; rankings are never mutated once stored.
"""

from __future__ import annotations

import csv
import io
import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .arrange import Modality
from .errors import (
    AlreadySubmittedError,
    IncompleteSessionError,
    InvalidResponseError,
    StudyConfigError,
    UnknownSessionError,
)

ALGORITHM_TAGS = ("A", "B")
STIMULI_PER_STUDY = 8
STIMULI_PER_PAGE = 4
PER_ALGORITHM_PER_PAGE = 2
DEFAULT_MIN_DURATION_S = 210  # three minutes and a half

EXPORT_COLUMNS = (
    "participant",
    "stimulus",
    "algorithm",
    "modality",
    "ranking",
    "expertise",
    "age",
    "gender",
)

EXPERTISE_LABELS = (
    "Nonmusician",
    "Music-loving nonmusician",
    "Amateur musician",
    "Serious amateur musician",
    "Semi-professional musician",
    "Professional musician",
)


@dataclass(frozen=True)
class StimulusSpec:
    id: str
    algorithm: str
    audio: Mapping[str, str]  # modality value -> audio url/path


@dataclass(frozen=True)
class StudyConfig:
    stimuli: tuple[StimulusSpec, ...]
    attention_prompt: str = "Please select the second option in this list."
    attention_expected: str = "option-2"
    attention_options: tuple[str, ...] = ("option-1", "option-2", "option-3", "option-4")
    min_duration_s: int = DEFAULT_MIN_DURATION_S

    def __post_init__(self):
        object.__setattr__(self, "stimuli", tuple(self.stimuli))
        if len(self.stimuli) != STIMULI_PER_STUDY:
            raise StudyConfigError(f"need exactly 8 stimuli, got {len(self.stimuli)}")
        ids = [s.id for s in self.stimuli]
        if len(set(ids)) != len(ids):
            raise StudyConfigError("stimulus ids must be unique")
        for tag in ALGORITHM_TAGS:
            count = sum(1 for s in self.stimuli if s.algorithm == tag)
            if count != 4:
                raise StudyConfigError(f"need exactly 4 stimuli for algorithm {tag}, got {count}")
        if any(s.algorithm not in ALGORITHM_TAGS for s in self.stimuli):
            raise StudyConfigError(f"algorithm tags must be in {ALGORITHM_TAGS}")
        for s in self.stimuli:
            for modality in Modality:
                if modality.value not in s.audio:
                    raise StudyConfigError(
                        f"stimulus {s.id!r} is missing audio for modality {modality.value!r}"
                    )
        if self.min_duration_s < 0:
            raise StudyConfigError("min_duration_s must be >= 0")

    def stimulus(self, stimulus_id: str) -> StimulusSpec:
        for s in self.stimuli:
            if s.id == stimulus_id:
                return s
        raise KeyError(stimulus_id)


@dataclass
class Session:
    id: str
    modality_order: tuple[Modality, Modality]
    pages: tuple[tuple[str, ...], tuple[str, ...]]
    created_at: float
    rankings: dict[int, tuple[str, ...]] = field(default_factory=dict)
    finalized_at: Optional[float] = None
    record: Optional["ParticipantRecord"] = None
    decision: Optional["InclusionDecision"] = None

    @property
    def state(self) -> str:
        return "finalized" if self.finalized_at is not None else "open"


@dataclass(frozen=True)
class ParticipantRecord:
    expertise: int
    attention_answer: str
    age: Optional[int] = None
    gender: Optional[str] = None

    def __post_init__(self):
        if not 1 <= self.expertise <= 6:
            raise ValueError(f"expertise must be in 1..6, got {self.expertise}")


@dataclass(frozen=True)
class InclusionDecision:
    included: bool
    reason: Optional[str] = None  # attention_failed | too_fast | incomplete


def _random_session(config: StudyConfig, rng: random.Random, created_at: float) -> Session:
    by_algorithm = {
        tag: [s.id for s in config.stimuli if s.algorithm == tag] for tag in ALGORITHM_TAGS
    }
    page1: list[str] = []
    page2: list[str] = []
    for tag in ALGORITHM_TAGS:
        chosen = rng.sample(by_algorithm[tag], PER_ALGORITHM_PER_PAGE)
        page1.extend(chosen)
        page2.extend(i for i in by_algorithm[tag] if i not in chosen)
    rng.shuffle(page1)
    rng.shuffle(page2)
    modalities = [Modality.PIANO_SOLO, Modality.GROUP]
    rng.shuffle(modalities)
    return Session(
        id=f"{rng.getrandbits(96):024x}",
        modality_order=(modalities[0], modalities[1]),
        pages=(tuple(page1), tuple(page2)),
        created_at=created_at,
    )


class StudyEngine:
    """In-memory session state over an append-only record log.

    The log (newline-delimited JSON, one record per event) is the durable
    store; on startup it is replayed to rebuild the index.  All writes are
    serialized by a lock.
    """

    def __init__(
        self,
        config: StudyConfig,
        log_path: Optional[Path | str] = None,
        clock: Callable[[], float] = time.time,
        seed: Optional[int] = None,
    ):
        self.config = config
        self.clock = clock
        self._rng = random.Random(seed)
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        self._log_path = Path(log_path) if log_path is not None else None
        if self._log_path is not None and self._log_path.exists():
            self._replay()

    # -- persistence --------------------------------------------------------

    def _append(self, record: dict) -> None:
        if self._log_path is None:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                kind = record.pop("event")
                if kind == "session":
                    session = Session(
                        id=record["id"],
                        modality_order=tuple(Modality(m) for m in record["modality_order"]),
                        pages=tuple(tuple(p) for p in record["pages"]),
                        created_at=record["created_at"],
                    )
                    self._sessions[session.id] = session
                elif kind == "ranking":
                    session = self._sessions[record["session"]]
                    session.rankings[record["page"]] = tuple(record["ordered_ids"])
                elif kind == "finalize":
                    session = self._sessions[record["session"]]
                    session.finalized_at = record["finalized_at"]
                    session.record = ParticipantRecord(
                        expertise=record["expertise"],
                        attention_answer=record["attention_answer"],
                        age=record.get("age"),
                        gender=record.get("gender"),
                    )
                    session.decision = InclusionDecision(
                        included=record["included"], reason=record.get("reason")
                    )

    # -- protocol operations -------------------------------------------------

    def create_session(self, seed: Optional[int] = None) -> Session:
        with self._lock:
            rng = random.Random(seed) if seed is not None else self._rng
            session = _random_session(self.config, rng, created_at=self.clock())
            while session.id in self._sessions:  # astronomically unlikely
                session = _random_session(self.config, rng, created_at=self.clock())
            self._sessions[session.id] = session
            self._append(
                {
                    "event": "session",
                    "id": session.id,
                    "modality_order": [m.value for m in session.modality_order],
                    "pages": [list(p) for p in session.pages],
                    "created_at": session.created_at,
                }
            )
            return session

    def get_session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    def page_items(self, session_id: str, page: int) -> tuple[Modality, list[dict]]:
        session = self.get_session(session_id)
        if page not in (1, 2):
            raise InvalidResponseError(f"page must be 1 or 2, got {page}")
        modality = session.modality_order[page - 1]
        items = [
            {
                "stimulus_id": stimulus_id,
                "audio_url": self.config.stimulus(stimulus_id).audio[modality.value],
            }
            for stimulus_id in session.pages[page - 1]
        ]
        return modality, items

    def submit_ranking(self, session_id: str, page: int, ordered_ids: Sequence[str]) -> None:
        """Persist one page's ranking; position 1 is the most pleasant."""
        with self._lock:
            session = self.get_session(session_id)
            if page not in (1, 2):
                raise InvalidResponseError(f"page must be 1 or 2, got {page}")
            if session.state != "open":
                raise AlreadySubmittedError(f"session {session_id} is finalized")
            if page in session.rankings:
                raise AlreadySubmittedError(f"page {page} was already submitted")
            ordered = tuple(str(i) for i in ordered_ids)
            expected = set(session.pages[page - 1])
            if len(ordered) != len(expected) or set(ordered) != expected:
                raise InvalidResponseError(
                    f"ranking must order exactly the page's stimuli {sorted(expected)}"
                )
            session.rankings[page] = ordered
            self._append(
                {
                    "event": "ranking",
                    "session": session_id,
                    "page": page,
                    "ordered_ids": list(ordered),
                    "at": self.clock(),
                }
            )

    def finalize(self, session_id: str, record: ParticipantRecord) -> InclusionDecision:
        """Apply the exclusion rules and close the session."""
        with self._lock:
            session = self.get_session(session_id)
            if session.state != "open":
                raise AlreadySubmittedError(f"session {session_id} is already finalized")
            if set(session.rankings) != {1, 2}:
                missing = sorted({1, 2} - set(session.rankings))
                raise IncompleteSessionError(f"pages not yet submitted: {missing}")
            finalized_at = self.clock()
            duration = finalized_at - session.created_at
            if record.attention_answer != self.config.attention_expected:
                decision = InclusionDecision(False, "attention_failed")
            elif duration < self.config.min_duration_s:
                decision = InclusionDecision(False, "too_fast")
            else:
                decision = InclusionDecision(True)
            session.finalized_at = finalized_at
            session.record = record
            session.decision = decision
            self._append(
                {
                    "event": "finalize",
                    "session": session_id,
                    "finalized_at": finalized_at,
                    "expertise": record.expertise,
                    "attention_answer": record.attention_answer,
                    "age": record.age,
                    "gender": record.gender,
                    "included": decision.included,
                    "reason": decision.reason,
                }
            )
            return decision

    # -- export ---------------------------------------------------------------

    def export_rows(self) -> tuple[list[dict], list[dict]]:
        """(analysis rows, exclusion report).

        One analysis row per included participant and stimulus; excluded or
        unfinished sessions appear only in the exclusion report.
        """
        rows: list[dict] = []
        exclusions: list[dict] = []
        with self._lock:
            sessions = sorted(self._sessions.values(), key=lambda s: (s.created_at, s.id))
            for session in sessions:
                if session.decision is None:
                    exclusions.append({"participant": session.id, "reason": "incomplete"})
                    continue
                if not session.decision.included:
                    exclusions.append(
                        {"participant": session.id, "reason": session.decision.reason}
                    )
                    continue
                record = session.record
                for page in (1, 2):
                    modality = session.modality_order[page - 1]
                    for position, stimulus_id in enumerate(session.rankings[page], start=1):
                        rows.append(
                            {
                                "participant": session.id,
                                "stimulus": stimulus_id,
                                "algorithm": self.config.stimulus(stimulus_id).algorithm,
                                "modality": modality.value,
                                "ranking": position,
                                "expertise": record.expertise,
                                "age": record.age,
                                "gender": record.gender,
                            }
                        )
        return rows, exclusions


def export_csv(engine: StudyEngine) -> str:
    rows, _ = engine.export_rows()
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=EXPORT_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in EXPORT_COLUMNS})
    return buffer.getvalue()
