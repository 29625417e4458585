"""Monitoring pipeline for a clinical AI triage detector.

Feeds the detector's HL7 result stream and the radiology report
impressions through a panel of model agents, forms k-of-n consensus
verdicts, queues discordant exams for human adjudication, and computes
the evaluation suite (metric battery with bootstrap CIs, agreement
matrices, paired MCC comparisons).
"""

from .domain import (
    AgentVerdict,
    AIResultEvent,
    CareSetting,
    EnsembleConfig,
    ExamRecord,
    HemorrhageSubtype,
    Impression,
    ImpressionStatus,
    LabelCategory,
    ReferenceLabel,
    Sex,
    VerdictStatus,
    analysis_cohort,
    normalize_subtype,
)
from .consensus import ConsensusDecision, Decision, TiePolicy, standard_configs, vote
from .stats import (
    AgreementMatrices,
    ConfusionCounts,
    MetricReport,
    agreement_matrices,
    bootstrap_ci,
    composite,
    confusion,
    jaccard_pair,
    kappa_pair,
    metrics,
    paired_bootstrap_mcc,
    pr_auc_from_rates,
    pr_auc_single_point,
    roc_auc_from_rates,
    roc_auc_single_point,
)
from .adjudication import ReviewPolicy, build_review_queue, record_label, reference_standard
from .config import AppConfig, load_config
from .orchestrator import (
    EvaluationReport,
    RunSummary,
    daily_batch,
    evaluate_detector,
    evaluate_llm_panel,
    export_report,
    run_evaluation,
)
from .store import TriageStore

__version__ = "0.1.0"
