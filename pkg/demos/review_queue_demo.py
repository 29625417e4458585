#!/usr/bin/env python3
"""Adjudication demo: how human review reshapes the reference standard.

A deliberately mediocre single-agent "panel" disagrees with the detector
often, which fills the review queue with discordant exams first. A
virtual reviewer then labels everything with the gold categories; the
ambiguous ones (non-diagnostic or indeterminate reads) drop out of the
reference standard, shrinking every downstream denominator.
"""

from triagemon import EnsembleConfig, LabelCategory
from triagemon.adjudication import (
    ReviewPolicy,
    build_review_queue,
    record_label,
    reference_standard,
)
from triagemon.domain import AgentVerdict, AIResultEvent, Impression, ImpressionStatus, VerdictStatus
from triagemon.orchestrator import compute_consensus, evaluate_llm_panel
from triagemon.store import TriageStore
from triagemon.testkit import synth_corpus


def main() -> None:
    corpus = synth_corpus(150, prevalence=0.20, seed=5, ambiguous_rate=0.12)
    store = TriageStore(":memory:")

    # a single agent that misses a third of true positives
    for i, case in enumerate(corpus):
        store.ensure_exam(case.accession)
        store.upsert_impression(
            Impression(case.accession, case.impression_text, ImpressionStatus.OK)
        )
        store.insert_ai_result(
            AIResultEvent(case.accession, case.ai_detector_output,
                          received_at=case.exam_time)
        )
    store.create_run("demo-run", "batch")
    store.upsert_verdicts(
        [
            AgentVerdict(
                "sole-reader",
                case.accession,
                case.ground_truth and i % 3 != 0,
                None,
                "{}",
                VerdictStatus.OK,
            )
            for i, case in enumerate(corpus)
        ],
        "demo-run",
    )
    compute_consensus(store, [EnsembleConfig("solo", ("sole-reader",), 1, 1)],
                      "demo-run")

    queue = build_review_queue(
        store, ReviewPolicy(config_name="solo", concordant_sample_n=30, seed=1)
    )
    n_discordant = sum(1 for item in queue if item.discordant)
    print(f"review queue: {len(queue)} exams "
          f"({n_discordant} discordant, ordered first)")
    print("first five queue entries:")
    for item in queue[:5]:
        print(f"  #{item.queue_position}  {item.accession}  "
              f"detector={'POS' if item.ai_result else 'NEG'}  "
              f"consensus={item.consensus_decision.value:>8}  "
              f"discordant={item.discordant}")

    by_accession = {c.accession: c for c in corpus}
    for item in queue:
        record_label(store, item.accession,
                     by_accession[item.accession].gold_category, "demo-reviewer")

    reference = reference_standard(store)
    ambiguous = sum(
        1 for c in corpus
        if c.gold_category not in (LabelCategory.ABSOLUTE_POSITIVE,
                                   LabelCategory.ABSOLUTE_NEGATIVE)
    )
    print(f"\nlabeled {len(queue)} of {len(corpus)} exams; corpus holds "
          f"{ambiguous} ambiguous reads")
    print(f"reference standard: {len(reference)} exams "
          f"(ambiguous labels are excluded from the denominator)")

    panel = evaluate_llm_panel(reference, store.latest_verdicts(),
                               consensus=store.latest_consensus("solo"),
                               n_boot=200, base_seed=3)
    ev = panel.models["sole-reader"]
    m = ev.metrics
    print(f"\nsole-reader vs reference (n={ev.n_used}): "
          f"sens={m.recall_sensitivity:.3f} spec={m.specificity:.3f} "
          f"kappa={m.cohens_kappa:.3f}")
    lo, hi = m.cis["recall_sensitivity"].low, m.cis["recall_sensitivity"].high
    print(f"sensitivity 95% CI: [{lo:.3f}, {hi:.3f}]")


if __name__ == "__main__":
    main()
