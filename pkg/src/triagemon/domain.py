"""Shared vocabulary for the monitoring pipeline.

Exams, impressions, detector events, agent verdicts, ensemble
configurations and reference labels, together with their validity rules.
All types here are immutable values and safe to share across threads;
which label or detector event is "current" is resolved by the store.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from importlib import resources
from typing import Iterable


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class CareSetting(str, Enum):
    EMERGENCY = "emergency"
    INPATIENT = "inpatient"
    OUTPATIENT = "outpatient"
    UNKNOWN = "unknown"


class ImpressionStatus(str, Enum):
    OK = "ok"
    MISSING_REPORT = "missing_report"
    MISSING_IMPRESSION = "missing_impression"


class VerdictStatus(str, Enum):
    OK = "ok"
    MALFORMED = "malformed"
    TRANSPORT_FAILED = "transport_failed"


class HemorrhageSubtype(str, Enum):
    SUBARACHNOID = "subarachnoid"
    INTRAPARENCHYMAL = "intraparenchymal"
    SUBDURAL = "subdural"
    EPIDURAL = "epidural"
    INTRAVENTRICULAR = "intraventricular"


class LabelCategory(str, Enum):
    ABSOLUTE_POSITIVE = "absolute_positive"
    ABSOLUTE_NEGATIVE = "absolute_negative"
    INCOMPLETE = "incomplete"
    INDETERMINATE = "indeterminate"


#: Categories that qualify an exam for the performance analysis.
ANALYSIS_ELIGIBLE = frozenset(
    {LabelCategory.ABSOLUTE_POSITIVE, LabelCategory.ABSOLUTE_NEGATIVE}
)


class DomainError(ValueError):
    """A value violates one of the domain invariants."""


class UnrecognizedSubtype(DomainError):
    """Raised when a subtype string matches neither the canonical names
    nor the shipped synonym table."""

    def __init__(self, raw: str):
        super().__init__(f"unrecognized hemorrhage subtype: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class ExamRecord:
    """One imaging exam as known to the pipeline."""

    accession: str
    patient_age: float | None = None
    patient_sex: Sex = Sex.UNKNOWN
    setting: CareSetting = CareSetting.UNKNOWN
    exam_time: datetime | None = None

    def __post_init__(self):
        if not self.accession:
            raise DomainError("ExamRecord.accession must be non-empty")
        if self.patient_age is not None and not (0 <= self.patient_age <= 130):
            raise DomainError(
                f"ExamRecord.patient_age out of range [0, 130]: {self.patient_age}"
            )


@dataclass(frozen=True)
class Impression:
    """The extracted impression section of one report."""

    accession: str
    text: str
    status: ImpressionStatus

    def __post_init__(self):
        if self.status is ImpressionStatus.OK and not self.text.strip():
            raise DomainError("Impression with status=ok must have non-empty text")


@dataclass(frozen=True)
class AIResultEvent:
    """The detector's boolean hemorrhage claim for one exam, as received
    over the wire. ``raw_message_id`` points at the stored raw frame;
    the store refuses events that do not reference one."""

    accession: str
    hemorrhage: bool
    received_at: datetime
    raw_message_id: int | None = None

    def __post_init__(self):
        if not self.accession:
            raise DomainError("AIResultEvent.accession must be non-empty")


@dataclass(frozen=True)
class AgentVerdict:
    """One agent's structured answer for one impression.

    The (status, hemorrhage, subtype) state machine is total: every
    combination either satisfies the invariants below or cannot be
    constructed.

    ``subtype_flagged`` records that the agent named a subtype we could
    not map onto the closed enum; the boolean answer is kept and the
    status stays ``ok``.
    """

    agent_id: str
    accession: str
    hemorrhage: bool | None
    subtype: HemorrhageSubtype | None
    raw_response: str
    status: VerdictStatus
    latency_ms: float = 0.0
    subtype_flagged: bool = False

    def __post_init__(self):
        if self.status is VerdictStatus.OK:
            if self.hemorrhage is None:
                raise DomainError("ok verdict requires a hemorrhage boolean")
        elif self.hemorrhage is not None:
            raise DomainError(f"{self.status.value} verdict must have hemorrhage=None")
        if self.subtype is not None and self.hemorrhage is not True:
            raise DomainError("subtype may only be set on a positive verdict")


@dataclass(frozen=True)
class EnsembleConfig:
    """A named k-of-n voting rule over an ordered set of agents.

    ``threshold_k`` positive votes among the valid ones declare the
    consensus positive; fewer than ``quorum_q`` valid votes leave the
    exam undecided.
    """

    name: str
    members: tuple[str, ...]
    threshold_k: int
    quorum_q: int

    def __post_init__(self):
        n = len(self.members)
        if n < 1:
            raise DomainError("EnsembleConfig needs at least one member")
        if len(set(self.members)) != n:
            raise DomainError(f"EnsembleConfig {self.name!r} has duplicate members")
        if not 1 <= self.threshold_k <= n:
            raise DomainError(f"threshold_k must be in [1, {n}], got {self.threshold_k}")
        if not 1 <= self.quorum_q <= n:
            raise DomainError(f"quorum_q must be in [1, {n}], got {self.quorum_q}")


@dataclass(frozen=True)
class ReferenceLabel:
    """A human reviewer's category for one exam. Labels are journaled
    append-only; the newest ``labeled_at`` per accession wins."""

    accession: str
    category: LabelCategory
    reviewer_id: str
    labeled_at: datetime

    @property
    def analysis_eligible(self) -> bool:
        return self.category in ANALYSIS_ELIGIBLE


def _load_synonym_table() -> dict[str, str]:
    with resources.files("triagemon.data").joinpath("subtype_synonyms.json").open(
        "r", encoding="utf-8"
    ) as fh:
        table = json.load(fh)
    return {k.lower(): v for k, v in table.items()}


_SYNONYMS: dict[str, str] | None = None


def subtype_synonyms() -> dict[str, str]:
    """The shipped synonym table (lowercased keys), loaded once."""
    global _SYNONYMS
    if _SYNONYMS is None:
        _SYNONYMS = _load_synonym_table()
    return _SYNONYMS


def normalize_subtype(raw: str) -> HemorrhageSubtype:
    """Map a free-text subtype onto the closed enum.

    Matching is case-insensitive after trimming; only canonical names
    and entries of the shipped synonym table are accepted, nothing else
    coerces. Raises :class:`UnrecognizedSubtype` otherwise.
    """
    key = raw.strip().lower()
    canonical = subtype_synonyms().get(key)
    if canonical is None:
        raise UnrecognizedSubtype(raw)
    return HemorrhageSubtype(canonical)


def current_labels(labels: Iterable[ReferenceLabel]) -> dict[str, ReferenceLabel]:
    """Latest label per accession (last-write-wins by labeled_at; input
    order breaks exact timestamp ties)."""
    latest: dict[str, ReferenceLabel] = {}
    for lab in labels:
        prev = latest.get(lab.accession)
        if prev is None or lab.labeled_at >= prev.labeled_at:
            latest[lab.accession] = lab
    return latest


def analysis_cohort(labels: Iterable[ReferenceLabel]) -> set[str]:
    """Accessions whose current category is absolute positive/negative.

    Ambiguous reviews (incomplete, indeterminate) are excluded from the
    performance analysis.
    """
    return {
        acc
        for acc, lab in current_labels(labels).items()
        if lab.analysis_eligible
    }
