"""Command-line entry points.

    triagemon --config-file app.yaml serve
    triagemon --config-file app.yaml batch --since 2024-03-01
    triagemon --config-file app.yaml eval --config full9 --export out/
    triagemon --config-file app.yaml export --run eval-abc123 --format tsv --out out/
    triagemon --config-file app.yaml adjudicate --reviewer jd
    triagemon simulate --out /tmp/demo --n 300 --prevalence 0.1

Every command loads the single YAML application config except
``simulate``, which is self-contained: it fabricates a corpus, mock
agents, and a mock detector stream, then runs the whole pipeline and
writes the exports. Useful both as a smoke test and as a worked
example of the moving parts.
"""

from __future__ import annotations

import argparse
import os
import sys
import threading
from datetime import datetime
from pathlib import Path

from .adjudication import (
    ReviewPolicy,
    build_review_queue,
    record_label,
    reference_standard,
)
from .api import ReviewApiServer
from .config import AppConfig, ConfigError, load_config
from .consensus import standard_configs
from .domain import DomainError, LabelCategory
from .hl7 import Hl7IngestService
from .orchestrator import daily_batch, export_report, run_evaluation
from .stats import StatsError
from .store import TriageStore


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="triagemon",
        description="Monitor an AI triage detector with an LLM panel and human review.",
    )
    p.add_argument(
        "--config-file", "-c", metavar="PATH",
        help="application config (YAML); required by every command except simulate",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the result listener and the review API")
    s.add_argument("--static-dir", metavar="DIR", default=None,
                   help="also serve dashboard files from this directory at /")

    b = sub.add_parser("batch", help="fetch reports, run the panel, update consensus")
    b.add_argument("--since", required=True, metavar="ISO_DATETIME",
                   help="process reports newer than this timestamp")

    e = sub.add_parser("eval", help="compute the metric report from store state")
    e.add_argument("--config", metavar="NAME", default=None,
                   help="ensemble whose consensus joins the panel table "
                        "(default from the evaluation section)")
    e.add_argument("--export", metavar="DIR", default=None,
                   help="also export the tables to this directory")
    e.add_argument("--two-reviewer", action="store_true",
                   help="build the reference in two-reviewer agreement mode")

    x = sub.add_parser("export", help="export a stored evaluation snapshot")
    x.add_argument("--run", required=True, metavar="RUN_ID")
    x.add_argument("--format", default="csv", choices=("csv", "tsv"))
    x.add_argument("--out", required=True, metavar="DIR")

    a = sub.add_parser("adjudicate", help="review queued exams in the terminal")
    a.add_argument("--reviewer", required=True, metavar="ID")
    a.add_argument("--limit", type=int, default=None,
                   help="stop after this many items")

    s = sub.add_parser("simulate", help="run the full pipeline on synthetic data")
    s.add_argument("--out", required=True, metavar="DIR")
    s.add_argument("--n", type=int, default=300)
    s.add_argument("--prevalence", type=float, default=0.10)
    s.add_argument("--ambiguous-rate", type=float, default=0.14)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--n-boot", type=int, default=1000)
    return p


def _require_config(args) -> AppConfig:
    if not args.config_file:
        raise ConfigError(f"{args.command} needs --config-file")
    return load_config(args.config_file)


def _api_token(cfg: AppConfig) -> str | None:
    if cfg.api.token_env is None:
        return None
    token = os.environ.get(cfg.api.token_env)
    if not token:
        raise ConfigError(
            f"api.token_env names {cfg.api.token_env!r} but it is not set"
        )
    return token


def cmd_serve(
    cfg: AppConfig, stop: threading.Event, out=print, static_dir: str | None = None
) -> int:
    token = _api_token(cfg)  # resolve before any socket binds
    store = TriageStore(cfg.store_path)
    service = Hl7IngestService(store, concept_code=cfg.listener.concept_code)
    listener = service.listener(cfg.listener.listen_address, ack_mode=cfg.listener.ack_mode)
    api = ReviewApiServer(
        store,
        review_policy=cfg.review,
        address=cfg.api.listen_address,
        token=token,
        static_dir=static_dir,
    )
    with listener, api:
        out(f"result listener on {listener.bound_address[0]}:{listener.bound_address[1]}")
        out(f"review api on {api.base_url}")
        if static_dir is not None:
            out(f"dashboard files from {static_dir}")
        try:
            stop.wait()
        except KeyboardInterrupt:
            pass
    out("stopped")
    return 0


def cmd_batch(cfg: AppConfig, since: str, out=print) -> int:
    if cfg.reports is None:
        raise ConfigError("batch needs a reports section in the config")
    if not cfg.agents:
        raise ConfigError("batch needs at least one agent")
    store = TriageStore(cfg.store_path)
    summary = daily_batch(
        store,
        cfg.reports,
        list(cfg.agents),
        cfg.load_template(),
        list(cfg.ensembles),
        since=datetime.fromisoformat(since),
        max_parallel=cfg.batch.max_parallel,
        tie_policy=cfg.batch.tie_policy,
    )
    tag = " (reused existing run)" if summary.reused_existing else ""
    out(f"run {summary.run_id}{tag}")
    out(f"  reports fetched      {summary.reports_fetched}")
    out(f"  impressions ok       {summary.impressions_ok}")
    out(f"  impressions missing  {summary.impressions_missing}")
    out(f"  panels run           {summary.panels_run}")
    out(f"  verdicts ok/mal/fail {summary.verdicts_ok}/{summary.verdicts_malformed}/{summary.verdicts_failed}")
    out(f"  consensus decisions  {summary.consensus_computed}")
    for ref, msg in summary.failures:
        out(f"  failure: {ref}: {msg}")
    return 0


def cmd_eval(cfg: AppConfig, config_name: str | None, export_dir: str | None,
             two_reviewer: bool, out=print) -> int:
    store = TriageStore(cfg.store_path)
    reference = reference_standard(store, two_reviewer=two_reviewer)
    run_id, report = run_evaluation(
        store,
        reference,
        panel_consensus_config=config_name or cfg.evaluation.panel_consensus_config,
        n_boot=cfg.evaluation.n_boot,
        base_seed=cfg.evaluation.base_seed,
        intersection=cfg.evaluation.intersection,
    )
    out(f"run {run_id}: reference n={report.reference_n}")
    for model_id, ev in report.panel.models.items():
        m = ev.metrics
        out(
            f"  {model_id:<14} n={ev.n_used:<5} acc={m.accuracy:.3f} "
            f"sens={m.recall_sensitivity:.3f} spec={m.specificity:.3f} "
            f"mcc={m.mcc:.3f} composite={m.composite:.3f}"
        )
    for name, ev in report.detector.evaluations.items():
        out(
            f"  detector vs {name:<10} n={ev.n_decided:<5} "
            f"(undecided {ev.n_undecided}) mcc={ev.metrics.mcc:.3f}"
        )
    for row in report.detector.comparisons:
        out(
            f"  mcc[{row.reference_a}] - mcc[{row.reference_b}] = "
            f"{row.stats.delta:+.4f} (p={row.stats.p_value:.4f})"
        )
    if export_dir:
        files = export_report(store.metric_snapshot_for_run(run_id), export_dir)
        out(f"exported {len(files)} files to {export_dir}")
    return 0


def cmd_export(cfg: AppConfig, run_id: str, fmt: str, out_dir: str, out=print) -> int:
    store = TriageStore(cfg.store_path)
    payload = store.metric_snapshot_for_run(run_id)
    if payload is None:
        out(f"no metric snapshot for run {run_id}")
        return 1
    files = export_report(payload, out_dir, fmt=fmt)
    for f in files:
        out(str(f))
    return 0


_CATEGORY_KEYS = {
    "1": LabelCategory.ABSOLUTE_POSITIVE,
    "2": LabelCategory.ABSOLUTE_NEGATIVE,
    "3": LabelCategory.INCOMPLETE,
    "4": LabelCategory.INDETERMINATE,
}


def cmd_adjudicate(cfg: AppConfig, reviewer: str, limit: int | None,
                   out=print, ask=input) -> int:
    if cfg.review is None:
        raise ConfigError("adjudicate needs a review section in the config")
    store = TriageStore(cfg.store_path)
    queue = build_review_queue(store, cfg.review)
    if not queue:
        out("queue is empty")
        return 0
    done = 0
    for item in queue:
        if limit is not None and done >= limit:
            break
        out("")
        out(f"[{item.queue_position}/{len(queue)}] {item.accession}"
            f"{'  DISCORDANT' if item.discordant else ''}")
        out(f"  impression: {item.impression_text}")
        out(f"  detector: {'positive' if item.ai_result else 'negative'}"
            f"   consensus: {item.consensus_decision.value}")
        while True:
            answer = ask(
                "  [1] absolute_positive  [2] absolute_negative  "
                "[3] incomplete  [4] indeterminate  [s]kip  [q]uit > "
            ).strip().lower()
            if answer in ("q", "quit"):
                out(f"labeled {done} exams")
                return 0
            if answer in ("s", "skip"):
                break
            if answer in _CATEGORY_KEYS:
                label = record_label(store, item.accession,
                                     _CATEGORY_KEYS[answer], reviewer)
                out(f"  recorded {label.category.value}")
                done += 1
                break
            out("  unrecognized choice")
    out(f"labeled {done} exams")
    return 0


#: sensitivity/specificity per mock agent, loosely spanning the spread
#: a real multi-model panel shows.
SIMULATED_PANEL = (
    ("mock-a", 0.95, 0.97),
    ("mock-b", 0.93, 0.96),
    ("mock-c", 0.94, 0.95),
    ("mock-d", 0.90, 0.93),
    ("mock-e", 0.88, 0.90),
    ("mock-f", 0.85, 0.88),
    ("mock-g", 0.80, 0.90),
    ("mock-h", 0.85, 0.72),
    ("mock-i", 0.70, 0.80),
)


def cmd_simulate(out_dir: str, n: int, prevalence: float, ambiguous_rate: float,
                 seed: int, n_boot: int, out=print) -> int:
    from .agents import AgentEndpointConfig, load_default_template
    from .reports import ReportSourceConfig
    from .testkit import (
        MockAgentProfile,
        MockAgentServer,
        send_detector_results,
        synth_corpus,
        virtual_review,
        write_report_files,
    )

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    corpus = synth_corpus(n, prevalence, seed=seed, ambiguous_rate=ambiguous_rate)
    write_report_files(corpus, root / "reports")
    out(f"corpus: {n} exams, {sum(c.ground_truth for c in corpus)} positive")

    store = TriageStore(str(root / "store.db"))
    service = Hl7IngestService(store)
    profiles = [
        MockAgentProfile(name, sens, spec, malformed_rate=0.01,
                         failure_rate=0.005, seed=seed)
        for name, sens, spec in SIMULATED_PANEL
    ]
    with MockAgentServer(profiles, corpus) as mocks, \
            service.listener(("127.0.0.1", 0)) as listener:
        send_detector_results(corpus, listener.bound_address, seed=seed)
        out(f"detector stream: {store.counter('events_out')} events"
            f" ({store.counter('frames_in')} frames)")

        agents = [
            AgentEndpointConfig(agent_id=p.agent_id, base_url=mocks.base_url,
                                model_name=p.agent_id, backoff_s=0.01)
            for p in profiles
        ]
        ensembles = standard_configs(
            [p.agent_id for p in profiles],
            top3=[p.agent_id for p in profiles[:3]],
        )
        summary = daily_batch(
            store,
            ReportSourceConfig(kind="directory", path=str(root / "reports")),
            agents,
            load_default_template(),
            ensembles,
            since=datetime(2000, 1, 1),
            max_parallel=8,
        )
        out(f"batch {summary.run_id}: {summary.panels_run} panels, "
            f"{summary.verdicts_ok} ok verdicts")

    n_labels = virtual_review(store, corpus)
    out(f"virtual reviewer labeled {n_labels} exams")
    reference = reference_standard(store)
    run_id, report = run_evaluation(
        store, reference, n_boot=n_boot, base_seed=seed,
    )
    files = export_report(store.metric_snapshot_for_run(run_id), root / "exports")
    out(f"evaluation {run_id}: reference n={report.reference_n}, "
        f"{len(files)} files in {root / 'exports'}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.out, args.n, args.prevalence,
                                args.ambiguous_rate, args.seed, args.n_boot)
        cfg = _require_config(args)
        if args.command == "serve":
            return cmd_serve(cfg, threading.Event(), static_dir=args.static_dir)
        if args.command == "batch":
            return cmd_batch(cfg, args.since)
        if args.command == "eval":
            return cmd_eval(cfg, args.config, args.export, args.two_reviewer)
        if args.command == "export":
            return cmd_export(cfg, args.run, args.format, args.out)
        if args.command == "adjudicate":
            return cmd_adjudicate(cfg, args.reviewer, args.limit)
    except (ConfigError, DomainError, StatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
