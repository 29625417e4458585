#!/usr/bin/env python3
"""End-to-end monitoring demo on a synthetic day of exams.

Everything runs locally and completes in well under a minute:
- generate a synthetic corpus (known ground truth, known detector)
- stream the detector's HL7 results into the store over MLLP
- fetch report files, extract impressions, run a five-agent mock panel
- compute ensemble consensus and build the adjudication queue
- label the queue with a virtual reviewer and evaluate everything
- export the metric snapshot to CSV
"""

import tempfile
from datetime import datetime
from pathlib import Path

from triagemon import EnsembleConfig, LabelCategory, daily_batch, run_evaluation
from triagemon.agents import AgentEndpointConfig, load_default_template
from triagemon.adjudication import reference_standard
from triagemon.hl7 import Hl7IngestService
from triagemon.orchestrator import export_report
from triagemon.reports import ReportSourceConfig
from triagemon.store import TriageStore
from triagemon.testkit import (
    MockAgentProfile,
    MockAgentServer,
    send_detector_results,
    synth_corpus,
    virtual_review,
    write_report_files,
)

PANEL = [
    MockAgentProfile("reader-strong", 0.95, 0.96, seed=7),
    MockAgentProfile("reader-good", 0.90, 0.93, seed=7),
    MockAgentProfile("reader-fair", 0.85, 0.88, seed=7),
    MockAgentProfile("reader-coarse", 0.80, 0.85, seed=7),
    MockAgentProfile("reader-weak", 0.70, 0.78, seed=7),
]


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="triagemon-demo-"))
    print(f"workspace: {root}\n")

    # -- synthetic ground truth -------------------------------------------
    corpus = synth_corpus(300, prevalence=0.10, seed=7, ambiguous_rate=0.05)
    write_report_files(corpus, root / "reports")
    eligible = (LabelCategory.ABSOLUTE_POSITIVE, LabelCategory.ABSOLUTE_NEGATIVE)
    print(f"corpus: {len(corpus)} exams, "
          f"{sum(c.ground_truth for c in corpus)} true positives, "
          f"{sum(c.gold_category not in eligible for c in corpus)} ambiguous")

    store = TriageStore(str(root / "store.db"))

    # -- detector results arrive over the wire ----------------------------
    ingest = Hl7IngestService(store)
    with MockAgentServer(PANEL, corpus) as mocks, \
            ingest.listener(("127.0.0.1", 0)) as listener:
        sent = send_detector_results(corpus, listener.bound_address, seed=7)
        print(f"MLLP ingest: {sent.messages_sent} messages sent, "
              f"{store.counters()['events_out']} accepted\n")

        # -- panel run over the day's reports ------------------------------
        agents = [
            AgentEndpointConfig(
                agent_id=p.agent_id,
                base_url=mocks.base_url,
                model_name=p.agent_id,
                max_retries=1,
                backoff_s=0.01,
            )
            for p in PANEL
        ]
        names = [p.agent_id for p in PANEL]
        ensembles = [
            EnsembleConfig("panel5", tuple(names), 3, 3),
            EnsembleConfig("top3", tuple(names[:3]), 2, 2),
            EnsembleConfig("solo-weak", (names[-1],), 1, 1),
        ]
        summary = daily_batch(
            store,
            ReportSourceConfig(kind="directory", path=str(root / "reports")),
            agents,
            load_default_template(),
            ensembles,
            since=datetime(2000, 1, 1),
            max_parallel=16,
        )
    print("batch summary:")
    for key in ("reports_fetched", "impressions_ok", "impressions_missing",
                "panels_run", "verdicts_ok", "consensus_computed"):
        print(f"  {key:>20}: {getattr(summary, key)}")

    # -- human review (virtual) and evaluation ----------------------------
    labeled = virtual_review(store, corpus)
    reference = reference_standard(store)
    print(f"\nreview: {labeled} labels, reference standard keeps "
          f"{len(reference)} of {len(corpus)} exams "
          f"(ambiguous categories excluded)")

    run_id, report = run_evaluation(
        store, reference, panel_consensus_config="panel5",
        n_boot=300, base_seed=7,
    )

    print(f"\npanel vs reference (n={report.reference_n}):")
    print(f"  {'model':>14} {'acc':>6} {'sens':>6} {'spec':>6} "
          f"{'kappa':>6} {'mcc':>6} {'comp':>6}")
    for model_id, ev in sorted(report.panel.models.items()):
        m = ev.metrics
        print(f"  {model_id:>14} {m.accuracy:6.3f} {m.recall_sensitivity:6.3f} "
              f"{m.specificity:6.3f} {m.cohens_kappa:6.3f} {m.mcc:6.3f} "
              f"{m.composite:6.3f}")

    print("\ndetector vs each consensus definition:")
    for name, ev in sorted(report.detector.evaluations.items()):
        m = ev.metrics
        print(f"  {name:>10}: n={ev.n_decided:<4} acc={m.accuracy:.3f} "
              f"sens={m.recall_sensitivity:.3f} spec={m.specificity:.3f} "
              f"mcc={m.mcc:.3f}")

    files = export_report(store.metric_snapshot_for_run(run_id), root / "exports")
    print(f"\nexported {len(files)} CSV files to {root / 'exports'}")
    print(f"evaluation id: {run_id} (content-addressed, stable across re-runs)")


if __name__ == "__main__":
    main()
