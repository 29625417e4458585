"""Batch pipeline and evaluation runner.

This is the glue layer: fetch reports, extract impressions, run the
agent panel, fold verdicts into consensus decisions, and turn the
accumulated store state into metric reports with bootstrap intervals.
Heavy lifting lives in the focused modules; everything here is
sequencing, accounting, and serialization.

Determinism contract: a batch is idempotent by content hash, every
bootstrap seed is derived from (base_seed, task label), and exported
artifacts contain no timestamps, so re-running an evaluation over the
same store state reproduces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .agents import AgentEndpointConfig, PromptTemplate, run_panel
from .consensus import ConsensusDecision, Decision, TiePolicy, vote
from .domain import (
    DomainError,
    EnsembleConfig,
    Impression,
    ImpressionStatus,
    VerdictStatus,
)
from .reports import ReportSourceConfig, extract_impression, fetch_reports
from .stats import (
    REPORT_METRICS,
    AgreementMatrices,
    MetricReport,
    NoPositives,
    PairedMccComparison,
    agreement_matrices,
    bootstrap_metric_cis,
    confusion,
    metrics,
    paired_bootstrap_mcc,
    pr_auc_single_point,
    roc_auc_single_point,
)
from .store import TriageStore


class EmptyReference(DomainError):
    pass


def derive_seed(base_seed: int, *labels: str) -> int:
    """A stable 32-bit seed per (base seed, task label); tasks never
    share a replicate stream by accident."""
    digest = hashlib.sha256(f"{base_seed}|{'|'.join(labels)}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


# --- batch -------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    run_id: str
    started_at: datetime
    finished_at: datetime | None
    panel_size: int
    reports_fetched: int = 0
    impressions_ok: int = 0
    impressions_missing: int = 0
    panels_run: int = 0
    verdicts_ok: int = 0
    verdicts_malformed: int = 0
    verdicts_failed: int = 0
    consensus_computed: int = 0
    failures: tuple = ()
    reused_existing: bool = False

    def __post_init__(self):
        if self.reports_fetched != self.impressions_ok + self.impressions_missing:
            raise DomainError(
                "reports_fetched must equal impressions_ok + impressions_missing"
            )
        total = self.verdicts_ok + self.verdicts_malformed + self.verdicts_failed
        if total != self.panels_run * self.panel_size:
            raise DomainError(
                "verdict counters must sum to panels_run * panel_size, "
                f"got {total} != {self.panels_run} * {self.panel_size}"
            )

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "started_at": self.started_at.isoformat(),
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
            "panel_size": self.panel_size,
            "reports_fetched": self.reports_fetched,
            "impressions_ok": self.impressions_ok,
            "impressions_missing": self.impressions_missing,
            "panels_run": self.panels_run,
            "verdicts_ok": self.verdicts_ok,
            "verdicts_malformed": self.verdicts_malformed,
            "verdicts_failed": self.verdicts_failed,
            "consensus_computed": self.consensus_computed,
            "failures": [list(f) for f in self.failures],
        }

    @classmethod
    def from_dict(cls, raw: dict, reused: bool = False) -> "RunSummary":
        return cls(
            run_id=raw["run_id"],
            started_at=datetime.fromisoformat(raw["started_at"]),
            finished_at=(
                datetime.fromisoformat(raw["finished_at"]) if raw["finished_at"] else None
            ),
            panel_size=raw["panel_size"],
            reports_fetched=raw["reports_fetched"],
            impressions_ok=raw["impressions_ok"],
            impressions_missing=raw["impressions_missing"],
            panels_run=raw["panels_run"],
            verdicts_ok=raw["verdicts_ok"],
            verdicts_malformed=raw["verdicts_malformed"],
            verdicts_failed=raw["verdicts_failed"],
            consensus_computed=raw["consensus_computed"],
            failures=tuple(tuple(f) for f in raw.get("failures", [])),
            reused_existing=reused,
        )


def batch_content_hash(
    documents,
    agents: list[AgentEndpointConfig],
    template: PromptTemplate,
    ensembles: list[EnsembleConfig],
) -> str:
    """Identity of one batch: what was fetched and how it would be
    processed. Same hash, same outcome, so the batch can be skipped."""
    payload = {
        "documents": sorted(
            (d.accession, hashlib.sha256(d.full_text.encode()).hexdigest())
            for d in documents
        ),
        "agents": [
            (a.agent_id, a.model_name, a.temperature, a.base_url) for a in agents
        ],
        "template": template.template_id,
        "ensembles": [
            (e.name, list(e.members), e.threshold_k, e.quorum_q) for e in ensembles
        ],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def compute_consensus(
    store: TriageStore,
    ensembles: list[EnsembleConfig],
    run_id: str,
    accessions: list[str] | None = None,
    tie_policy: TiePolicy = TiePolicy.POSITIVE_WINS,
) -> tuple[int, list[tuple[str, str]]]:
    """(Re)derive consensus decisions from the newest stored verdicts.

    Exams whose verdict set does not cover a config's members are
    skipped and reported, not fatal; returns (written, failures)."""
    latest = store.latest_verdicts()
    if accessions is not None:
        wanted = set(accessions)
        latest = {a: v for a, v in latest.items() if a in wanted}
    decisions: list[ConsensusDecision] = []
    failures: list[tuple[str, str]] = []
    for acc in sorted(latest):
        for cfg in ensembles:
            try:
                decisions.append(vote(latest[acc], cfg, tie_policy))
            except DomainError as exc:
                failures.append((acc, f"{cfg.name}: {exc}"))
    store.upsert_consensus_bulk(decisions, run_id)
    return len(decisions), failures


def daily_batch(
    store: TriageStore,
    source: ReportSourceConfig,
    agents: list[AgentEndpointConfig],
    template: PromptTemplate,
    ensembles: list[EnsembleConfig],
    since: datetime,
    max_parallel: int = 4,
    tie_policy: TiePolicy = TiePolicy.POSITIVE_WINS,
) -> RunSummary:
    """One pass of the daily pipeline over everything newer than
    ``since``.

    Per-exam problems are recorded and skipped, never fatal; a batch
    whose content hash matches an earlier run is not reprocessed (the
    stored summary comes back flagged ``reused_existing``).
    """
    started = datetime.now().replace(microsecond=0)
    batch = fetch_reports(source, since)
    content_hash = batch_content_hash(batch.documents, agents, template, ensembles)
    existing = store.find_run_by_hash("batch", content_hash)
    if existing is not None:
        row = store.get_run(existing)
        if row and row.get("summary"):
            return RunSummary.from_dict(row["summary"], reused=True)

    run_id = f"batch-{content_hash[:12]}"
    store.create_run(run_id, "batch", content_hash)
    failures: list[tuple[str, str]] = [(ref, msg) for ref, msg in batch.failures]

    ok_impressions: list[Impression] = []
    missing = 0
    for doc in batch.documents:
        store.upsert_report(doc)
        imp = extract_impression(doc)
        store.upsert_impression(imp)
        if imp.status is ImpressionStatus.OK:
            ok_impressions.append(imp)
        else:
            missing += 1

    counts = {VerdictStatus.OK: 0, VerdictStatus.MALFORMED: 0, VerdictStatus.TRANSPORT_FAILED: 0}
    panels = 0
    for imp in ok_impressions:
        try:
            verdicts = run_panel(imp, agents, template, max_parallel=max_parallel)
        except Exception as exc:  # per-exam isolation; batch must finish
            failures.append((imp.accession, str(exc)))
            continue
        store.upsert_verdicts(verdicts, run_id)
        panels += 1
        for v in verdicts:
            counts[v.status] += 1

    written, cfailures = compute_consensus(
        store,
        ensembles,
        run_id,
        accessions=[i.accession for i in ok_impressions],
        tie_policy=tie_policy,
    )
    failures.extend(cfailures)

    summary = RunSummary(
        run_id=run_id,
        started_at=started,
        finished_at=datetime.now().replace(microsecond=0),
        panel_size=len(agents),
        reports_fetched=len(batch.documents),
        impressions_ok=len(ok_impressions),
        impressions_missing=missing,
        panels_run=panels,
        verdicts_ok=counts[VerdictStatus.OK],
        verdicts_malformed=counts[VerdictStatus.MALFORMED],
        verdicts_failed=counts[VerdictStatus.TRANSPORT_FAILED],
        consensus_computed=written,
        failures=tuple(failures),
    )
    store.finish_run(run_id, summary.to_dict())
    return summary


# --- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class ModelEvaluation:
    model_id: str
    n_used: int
    metrics: MetricReport
    roc_auc: float
    pr_auc: float


@dataclass(frozen=True)
class DetectorEvaluation:
    config_name: str
    n_decided: int
    n_undecided: int
    metrics: MetricReport


@dataclass(frozen=True)
class MccComparisonRow:
    """MCC of the detector under reference definition A vs definition B.

    The paired resampling runs over the exams where both definitions
    are decided; comparands, B, and seed all ride along."""

    reference_a: str
    reference_b: str
    stats: PairedMccComparison


@dataclass(frozen=True)
class PanelSection:
    models: dict
    matrices: AgreementMatrices | None
    matrix_n: int
    skipped: tuple = ()


@dataclass(frozen=True)
class DetectorSection:
    evaluations: dict
    comparisons: tuple


@dataclass(frozen=True)
class EvaluationReport:
    reference_n: int
    panel: PanelSection
    detector: DetectorSection
    meta: dict = field(default_factory=dict)


CONSENSUS_RATER = "consensus"


def _model_eval(
    model_id: str, pred: list[bool], ref: list[bool], n_boot: int, seed: int
) -> ModelEvaluation:
    c = confusion(pred, ref)
    report = metrics(c)
    cis = bootstrap_metric_cis(pred, ref, REPORT_METRICS, n_boot=n_boot, seed=seed)
    report = MetricReport(
        **{name: report.value(name) for name in REPORT_METRICS}, cis=cis
    )
    try:
        pr = pr_auc_single_point(c)
    except NoPositives:
        pr = float("nan")
    return ModelEvaluation(
        model_id=model_id,
        n_used=c.total,
        metrics=report,
        roc_auc=roc_auc_single_point(c),
        pr_auc=pr,
    )


def evaluate_llm_panel(
    reference: dict,
    verdicts_by_accession: dict,
    consensus: dict | None = None,
    n_boot: int = 1000,
    base_seed: int = 0,
    intersection: bool = False,
) -> PanelSection:
    """Per-model metric battery against the reference standard.

    Complete-case per model: an exam counts for a model only when that
    model returned an ok verdict there (``intersection=True`` restricts
    every model to the common ok set instead, counts disclosed either
    way). The consensus joins as one more rater when given; agreement
    matrices run over the all-rater complete-case set.
    """
    if not reference:
        raise EmptyReference("reference standard is empty")

    columns: dict[str, dict[str, bool]] = {}
    for acc, verdicts in verdicts_by_accession.items():
        if acc not in reference:
            continue
        for v in verdicts:
            if v.status is VerdictStatus.OK:
                columns.setdefault(v.agent_id, {})[acc] = bool(v.hemorrhage)
    if consensus is not None:
        decided = {
            acc: d.decision is Decision.POSITIVE
            for acc, d in consensus.items()
            if acc in reference and d.decision is not Decision.UNDECIDED
        }
        columns[CONSENSUS_RATER] = decided

    model_ids = sorted(m for m in columns if m != CONSENSUS_RATER)
    if CONSENSUS_RATER in columns:
        model_ids.append(CONSENSUS_RATER)

    if intersection:
        common = set(reference)
        for m in model_ids:
            common &= set(columns[m])
        for m in model_ids:
            columns[m] = {acc: columns[m][acc] for acc in common}

    models: dict[str, ModelEvaluation] = {}
    skipped = []
    for m in model_ids:
        accs = sorted(columns[m])
        pred = [columns[m][a] for a in accs]
        ref = [reference[a] for a in accs]
        if len(accs) < 2 or len(set(ref)) < 2:
            skipped.append((m, len(accs)))
            continue
        models[m] = _model_eval(
            m, pred, ref, n_boot=n_boot, seed=derive_seed(base_seed, "panel", m)
        )

    matrix_accs = sorted(set(reference).intersection(*(set(columns[m]) for m in model_ids))) if model_ids else []
    matrices = None
    if len(model_ids) >= 2 and len(matrix_accs) >= 2:
        matrices = agreement_matrices(
            {m: [columns[m][a] for a in matrix_accs] for m in model_ids}
        )
    return PanelSection(
        models=models,
        matrices=matrices,
        matrix_n=len(matrix_accs),
        skipped=tuple(skipped),
    )


def evaluate_detector(
    ai_results: dict,
    consensus_by_config: dict,
    n_boot: int = 1000,
    base_seed: int = 0,
) -> DetectorSection:
    """Detector performance when each ensemble's decision is taken as
    the reference, plus pairwise MCC comparisons between reference
    definitions.

    Undecided exams leave the denominator and get counted. The pairwise
    deltas use the identity MCC(x, y) = MCC(y, x): resampling the two
    consensus columns against the fixed detector column compares the
    detector's MCC under the two definitions on their decided overlap.
    """
    evaluations: dict[str, DetectorEvaluation] = {}
    decided_maps: dict[str, dict[str, bool]] = {}
    for name in sorted(consensus_by_config):
        decisions = consensus_by_config[name]
        scope = {acc: d for acc, d in decisions.items() if acc in ai_results}
        decided = {
            acc: d.decision is Decision.POSITIVE
            for acc, d in scope.items()
            if d.decision is not Decision.UNDECIDED
        }
        decided_maps[name] = decided
        accs = sorted(decided)
        if len(accs) < 2 or len(set(decided.values())) < 2:
            continue
        pred = [ai_results[a] for a in accs]
        ref = [decided[a] for a in accs]
        c = confusion(pred, ref)
        report = metrics(c)
        cis = bootstrap_metric_cis(
            pred, ref, REPORT_METRICS, n_boot=n_boot,
            seed=derive_seed(base_seed, "detector", name),
        )
        evaluations[name] = DetectorEvaluation(
            config_name=name,
            n_decided=len(accs),
            n_undecided=len(scope) - len(accs),
            metrics=MetricReport(
                **{m: report.value(m) for m in REPORT_METRICS}, cis=cis
            ),
        )

    comparisons = []
    names = sorted(evaluations)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            overlap = sorted(set(decided_maps[a]) & set(decided_maps[b]))
            if len(overlap) < 2:
                continue
            cons_a = [decided_maps[a][acc] for acc in overlap]
            cons_b = [decided_maps[b][acc] for acc in overlap]
            det = [ai_results[acc] for acc in overlap]
            comparisons.append(
                MccComparisonRow(
                    reference_a=a,
                    reference_b=b,
                    stats=paired_bootstrap_mcc(
                        cons_a, cons_b, det, n_boot=n_boot,
                        seed=derive_seed(base_seed, "mcc", a, b),
                    ),
                )
            )
    return DetectorSection(evaluations=evaluations, comparisons=tuple(comparisons))


def run_evaluation(
    store: TriageStore,
    reference: dict,
    panel_consensus_config: str = "full9",
    n_boot: int = 1000,
    base_seed: int = 0,
    intersection: bool = False,
    run_id: str | None = None,
) -> tuple[str, EvaluationReport]:
    """Assemble the full report from store state and snapshot it.

    The snapshot payload carries no timestamps; rerunning over the same
    store state stores an identical payload under a new run id.
    """
    if not reference:
        raise EmptyReference("reference standard is empty")
    verdicts = store.latest_verdicts()
    config_names = store.consensus_config_names()
    consensus_by_config = {n: store.latest_consensus(n) for n in config_names}
    panel_consensus = consensus_by_config.get(panel_consensus_config)

    panel = evaluate_llm_panel(
        reference,
        verdicts,
        consensus=panel_consensus,
        n_boot=n_boot,
        base_seed=base_seed,
        intersection=intersection,
    )
    detector = evaluate_detector(
        store.current_ai_results(),
        consensus_by_config,
        n_boot=n_boot,
        base_seed=base_seed,
    )
    report = EvaluationReport(
        reference_n=len(reference),
        panel=panel,
        detector=detector,
        meta={
            "n_boot": n_boot,
            "base_seed": base_seed,
            "panel_consensus_config": panel_consensus_config,
            "intersection": intersection,
            "consensus_configs": config_names,
        },
    )
    payload = report_to_dict(report)
    rid = run_id or f"eval-{hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]}"
    existing = store.get_run(rid)
    if existing is None:
        store.create_run(rid, "eval")
        store.save_metric_snapshot(rid, payload)
        store.finish_run(rid, {"reference_n": len(reference)})
    return rid, report


# --- serialization -----------------------------------------------------------


def _metric_dict(r: MetricReport) -> dict:
    out = {name: r.value(name) for name in REPORT_METRICS}
    out["cis"] = {
        name: {
            "low": ci.low,
            "high": ci.high,
            "replicates_used": ci.replicates_used,
            "replicates_excluded": ci.replicates_excluded,
            "n_boot": ci.n_boot,
            "seed": ci.seed,
        }
        for name, ci in sorted(r.cis.items())
    }
    return out


def report_to_dict(report: EvaluationReport) -> dict:
    """JSON-ready mirror of the full report; key order is fixed so the
    serialized form is stable."""
    panel = report.panel
    out = {
        "reference_n": report.reference_n,
        "meta": dict(sorted(report.meta.items())),
        "panel": {
            "models": {
                m: {
                    "n_used": ev.n_used,
                    "metrics": _metric_dict(ev.metrics),
                    "roc_auc": ev.roc_auc,
                    "pr_auc": ev.pr_auc,
                }
                for m, ev in panel.models.items()
            },
            "matrix_n": panel.matrix_n,
            "skipped": [list(s) for s in panel.skipped],
        },
        "detector": {
            "evaluations": {
                name: {
                    "n_decided": ev.n_decided,
                    "n_undecided": ev.n_undecided,
                    "metrics": _metric_dict(ev.metrics),
                }
                for name, ev in report.detector.evaluations.items()
            },
            "comparisons": [
                {
                    "reference_a": row.reference_a,
                    "reference_b": row.reference_b,
                    "mcc_a": row.stats.mcc_a,
                    "mcc_b": row.stats.mcc_b,
                    "delta": row.stats.delta,
                    "p_value": row.stats.p_value,
                    "delta_low": row.stats.delta_low,
                    "delta_high": row.stats.delta_high,
                    "n_cases": row.stats.n_cases,
                    "replicates_used": row.stats.replicates_used,
                    "replicates_excluded": row.stats.replicates_excluded,
                    "n_boot": row.stats.n_boot,
                    "seed": row.stats.seed,
                }
                for row in report.detector.comparisons
            ],
        },
    }
    if panel.matrices is not None:
        out["panel"]["matrices"] = {
            "rater_ids": list(panel.matrices.rater_ids),
            "kappa": [[float(v) for v in row] for row in panel.matrices.kappa],
            "jaccard": [[float(v) for v in row] for row in panel.matrices.jaccard],
        }
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.12g" % x
    return str(x)


def _write_table(path: Path, header: list[str], rows: list[list], delimiter: str):
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def export_report(payload: dict, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write one delimiter-separated file per table plus the full
    structured document. Floats go through a fixed format, so exports
    of the same payload are byte-identical.
    """
    delimiters = {"csv": ",", "tsv": "\t"}
    if fmt not in delimiters:
        raise DomainError(f"unknown export format {fmt!r}")
    delim = delimiters[fmt]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, header: list[str], rows: list[list]):
        path = out / f"{name}.{fmt}"
        _write_table(path, header, rows, delim)
        written.append(path)

    models = payload["panel"]["models"]
    emit(
        "panel_metrics",
        ["model", "n"] + list(REPORT_METRICS),
        [
            [m, ev["n_used"]] + [ev["metrics"][k] for k in REPORT_METRICS]
            for m, ev in models.items()
        ],
    )
    emit(
        "panel_cis",
        ["model", "metric", "low", "high", "replicates_used",
         "replicates_excluded", "n_boot", "seed"],
        [
            [m, k, ci["low"], ci["high"], ci["replicates_used"],
             ci["replicates_excluded"], ci["n_boot"], ci["seed"]]
            for m, ev in models.items()
            for k, ci in ev["metrics"]["cis"].items()
        ],
    )
    emit(
        "auc",
        ["model", "n", "roc_auc", "pr_auc"],
        [[m, ev["n_used"], ev["roc_auc"], ev["pr_auc"]] for m, ev in models.items()],
    )

    if "matrices" in payload["panel"]:
        mats = payload["panel"]["matrices"]
        ids = mats["rater_ids"]
        for kind in ("kappa", "jaccard"):
            emit(
                f"{kind}_matrix",
                ["rater"] + ids,
                [[rid] + mats[kind][i] for i, rid in enumerate(ids)],
            )

    det = payload["detector"]
    emit(
        "detector_metrics",
        ["config", "n_decided", "n_undecided"] + list(REPORT_METRICS),
        [
            [name, ev["n_decided"], ev["n_undecided"]]
            + [ev["metrics"][k] for k in REPORT_METRICS]
            for name, ev in det["evaluations"].items()
        ],
    )
    emit(
        "mcc_comparisons",
        ["reference_a", "reference_b", "mcc_a", "mcc_b", "delta",
         "delta_low", "delta_high", "p_value", "n_cases",
         "replicates_used", "replicates_excluded", "n_boot", "seed"],
        [
            [row["reference_a"], row["reference_b"], row["mcc_a"], row["mcc_b"],
             row["delta"], row["delta_low"], row["delta_high"], row["p_value"],
             row["n_cases"], row["replicates_used"], row["replicates_excluded"],
             row["n_boot"], row["seed"]]
            for row in det["comparisons"]
        ],
    )

    doc = out / "report.json"
    doc.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    written.append(doc)
    return written


__all__ = [
    "CONSENSUS_RATER",
    "DetectorEvaluation",
    "DetectorSection",
    "EmptyReference",
    "EvaluationReport",
    "MccComparisonRow",
    "ModelEvaluation",
    "PanelSection",
    "RunSummary",
    "batch_content_hash",
    "compute_consensus",
    "daily_batch",
    "derive_seed",
    "evaluate_detector",
    "evaluate_llm_panel",
    "export_report",
    "report_to_dict",
    "run_evaluation",
]
