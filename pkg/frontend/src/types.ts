/**
 * Wire types for the monitoring API.
 *
 * These mirror the server's JSON exactly; the client never reshapes or
 * recomputes anything, so every field here is a field that came over
 * the wire.
 */

export type LabelCategory =
  | 'absolute_positive'
  | 'absolute_negative'
  | 'incomplete'
  | 'indeterminate';

export const LABEL_CATEGORIES: readonly LabelCategory[] = [
  'absolute_positive',
  'absolute_negative',
  'incomplete',
  'indeterminate',
];

export type ConsensusDecision = 'positive' | 'negative' | 'undecided';

export interface CurrentLabel {
  category: LabelCategory;
  reviewer_id: string;
  labeled_at: string;
}

export interface QueueItem {
  accession: string;
  impression_text: string;
  ai_result: boolean;
  consensus_decision: ConsensusDecision;
  discordant: boolean;
  current_label: CurrentLabel | null;
  queue_position: number;
}

export interface QueuePayload {
  config_name: string;
  items: QueueItem[];
}

export interface LabelAck {
  accession: string;
  category: LabelCategory;
  reviewer_id: string;
  labeled_at: string;
}

/** Point-estimate names, in the server's reporting order. */
export const METRIC_NAMES = [
  'accuracy',
  'precision_ppv',
  'recall_sensitivity',
  'specificity',
  'npv',
  'f1',
  'cohens_kappa',
  'mcc',
  'composite',
] as const;

export type MetricName = (typeof METRIC_NAMES)[number];

export interface ConfidenceInterval {
  low: number;
  high: number;
  replicates_used: number;
  replicates_excluded: number;
  n_boot: number;
  seed: number;
}

export type MetricBlock = {
  [K in MetricName]: number;
} & {
  cis: Record<string, ConfidenceInterval>;
};

export interface ModelEvaluation {
  n_used: number;
  metrics: MetricBlock;
  roc_auc: number;
  pr_auc: number;
}

export interface DetectorEvaluation {
  n_decided: number;
  n_undecided: number;
  metrics: MetricBlock;
}

export interface MccComparison {
  reference_a: string;
  reference_b: string;
  mcc_a: number;
  mcc_b: number;
  delta: number;
  p_value: number;
  delta_low: number;
  delta_high: number;
  n_cases: number;
  replicates_used: number;
  replicates_excluded: number;
  n_boot: number;
  seed: number;
}

export interface MatricesPayload {
  rater_ids: string[];
  kappa: number[][];
  jaccard: number[][];
}

export interface MetricsSnapshot {
  reference_n: number;
  meta: {
    n_boot: number;
    base_seed: number;
    panel_consensus_config: string;
    intersection: boolean;
    consensus_configs: string[];
  };
  panel: {
    models: Record<string, ModelEvaluation>;
    matrix_n: number;
    skipped: string[][];
    matrices?: MatricesPayload;
  };
  detector: {
    evaluations: Record<string, DetectorEvaluation>;
    comparisons: MccComparison[];
  };
}

export interface ReferenceSummary {
  labeled: number;
  by_category: Record<string, number>;
  reference_n: number;
  reference_positive: number;
}
