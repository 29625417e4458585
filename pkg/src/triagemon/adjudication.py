"""Human review workflow: queue building, label capture, and the
derived reference standard.

Discordant exams (detector vs. consensus, both decided) always get
reviewed and come first, in exam-time order; a seeded uniform sample of
concordant exams follows so reviewer attention is not spent only where
the systems disagree. Reviewer categories are journaled append-only and
the latest one per exam wins; only absolute positives/negatives enter
the reference standard.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timezone

from .consensus import Decision
from .domain import (
    ANALYSIS_ELIGIBLE,
    DomainError,
    LabelCategory,
    ReferenceLabel,
)


class UnknownAccession(DomainError):
    pass


class InvalidCategory(DomainError):
    pass


@dataclass(frozen=True)
class ReviewItem:
    accession: str
    impression_text: str
    ai_result: bool
    consensus_decision: Decision
    discordant: bool
    current_label: ReferenceLabel | None
    queue_position: int

    def __post_init__(self):
        if self.consensus_decision in (Decision.POSITIVE, Decision.NEGATIVE):
            expected = self.ai_result != (self.consensus_decision is Decision.POSITIVE)
            if self.discordant != expected:
                raise DomainError("discordant flag contradicts ai/consensus pair")
        elif self.discordant:
            raise DomainError("undecided consensus cannot be discordant")


@dataclass(frozen=True)
class ReviewPolicy:
    """How the queue is composed.

    all_discordant: include every unlabeled discordant exam (the normal
    mode); concordant_sample_n: size of the seeded uniform concordant
    sample; include_undecided: also queue exams whose consensus is
    undecided; include_labeled: re-review mode, already labeled exams
    stay in the queue with their current label attached.
    """

    config_name: str
    all_discordant: bool = True
    concordant_sample_n: int = 0
    seed: int = 0
    include_undecided: bool = False
    include_labeled: bool = False

    def __post_init__(self):
        if not self.config_name:
            raise DomainError("ReviewPolicy.config_name must name an ensemble")
        if self.concordant_sample_n < 0:
            raise DomainError("concordant_sample_n must be >= 0")


def build_review_queue(store, policy: ReviewPolicy) -> list[ReviewItem]:
    """Ordered review queue: discordant (chronological), then undecided
    when requested, then the concordant sample. Deterministic for a
    fixed store state and policy."""
    ai = store.current_ai_results()
    consensus = store.latest_consensus(policy.config_name)
    labels = current_reference_labels(store)

    discordant: list[str] = []
    concordant: list[str] = []
    undecided: list[str] = []
    for acc in ai.keys() & consensus.keys():
        if not policy.include_labeled and acc in labels:
            continue
        decision = consensus[acc].decision
        if decision is Decision.UNDECIDED:
            undecided.append(acc)
        elif ai[acc] != (decision is Decision.POSITIVE):
            discordant.append(acc)
        else:
            concordant.append(acc)

    def exam_order(acc: str):
        exam = store.get_exam(acc)
        when = exam.exam_time if exam and exam.exam_time else datetime.max
        return (when, acc)

    ordered: list[str] = []
    if policy.all_discordant:
        ordered.extend(sorted(discordant, key=exam_order))
    if policy.include_undecided:
        ordered.extend(sorted(undecided, key=exam_order))
    pool = sorted(concordant)
    n = min(policy.concordant_sample_n, len(pool))
    if n:
        ordered.extend(random.Random(policy.seed).sample(pool, n))

    items = []
    for pos, acc in enumerate(ordered, start=1):
        imp = store.get_impression(acc)
        decision = consensus[acc].decision
        items.append(
            ReviewItem(
                accession=acc,
                impression_text=imp.text if imp else "",
                ai_result=ai[acc],
                consensus_decision=decision,
                discordant=(
                    decision is not Decision.UNDECIDED
                    and ai[acc] != (decision is Decision.POSITIVE)
                ),
                current_label=labels.get(acc),
                queue_position=pos,
            )
        )
    return items


def record_label(
    store,
    accession: str,
    category: LabelCategory | str,
    reviewer_id: str,
    at: datetime | None = None,
) -> ReferenceLabel:
    """Append one reviewer category for an exam that exists."""
    try:
        category = LabelCategory(category)
    except ValueError:
        raise InvalidCategory(f"unknown review category {category!r}") from None
    if store.get_exam(accession) is None:
        raise UnknownAccession(accession)
    label = ReferenceLabel(
        accession=accession,
        category=category,
        reviewer_id=reviewer_id,
        labeled_at=at or datetime.now(timezone.utc).replace(tzinfo=None),
    )
    store.append_label(label)
    return label


def current_reference_labels(store, two_reviewer: bool = False) -> dict[str, ReferenceLabel]:
    """Latest settled label per accession.

    In two-reviewer mode an exam is settled only when its two newest
    labels come from different reviewers and agree on the category;
    otherwise it stays unlabeled (and back in the queue)."""
    per_acc: dict[str, list[ReferenceLabel]] = {}
    for lab in store.all_labels():
        per_acc.setdefault(lab.accession, []).append(lab)
    out: dict[str, ReferenceLabel] = {}
    for acc, labs in per_acc.items():
        labs.sort(key=lambda l: l.labeled_at)  # stable: arrival order breaks ties
        if two_reviewer:
            if len(labs) < 2:
                continue
            a, b = labs[-2], labs[-1]
            if a.reviewer_id == b.reviewer_id or a.category != b.category:
                continue
        out[acc] = labs[-1]
    return out


def reference_standard(store, two_reviewer: bool = False) -> dict[str, bool]:
    """Analysis-eligible reference: absolute_positive → True,
    absolute_negative → False; ambiguous categories drop out."""
    return {
        acc: lab.category is LabelCategory.ABSOLUTE_POSITIVE
        for acc, lab in current_reference_labels(store, two_reviewer).items()
        if lab.category in ANALYSIS_ELIGIBLE
    }
