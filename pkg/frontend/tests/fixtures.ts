/**
 * Deterministic fixture payloads shaped exactly like the monitoring
 * API's JSON. A tiny LCG keeps the numbers stable across runs without
 * hand-writing hundreds of floats.
 */

import type {
  MatricesPayload,
  MetricBlock,
  MetricsSnapshot,
  QueuePayload,
} from '../src/types.js';
import { METRIC_NAMES } from '../src/types.js';

function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

export const RATER_IDS = [
  'llama-1b',
  'llama-3b',
  'codellama-7b',
  'llama-8b',
  'granite-2b',
  'llama-70b',
  'granite-8b',
  'deepseek-r1',
  'gpt-4o',
  'consensus',
];

function metricBlock(rand: () => number, seed: number): MetricBlock {
  const values = Object.fromEntries(
    METRIC_NAMES.map((name) => [name, Math.round(rand() * 1000) / 1000]),
  ) as Record<(typeof METRIC_NAMES)[number], number>;
  const cis = Object.fromEntries(
    METRIC_NAMES.map((name) => [
      name,
      {
        low: Math.round((values[name] - 0.04) * 1000) / 1000,
        high: Math.round((values[name] + 0.04) * 1000) / 1000,
        replicates_used: 1000,
        replicates_excluded: 0,
        n_boot: 1000,
        seed,
      },
    ]),
  );
  return { ...values, cis };
}

export function makeMatrices(): MatricesPayload {
  const rand = lcg(7);
  const n = RATER_IDS.length;
  const build = (): number[][] => {
    const m: number[][] = Array.from({ length: n }, () => Array(n).fill(0));
    for (let i = 0; i < n; i += 1) {
      for (let j = i; j < n; j += 1) {
        const v = i === j ? 1 : Math.round(rand() * 1000) / 1000;
        m[i]![j] = v;
        m[j]![i] = v;
      }
    }
    return m;
  };
  return { rater_ids: [...RATER_IDS], kappa: build(), jaccard: build() };
}

export function makeSnapshot(): MetricsSnapshot {
  const rand = lcg(42);
  const models = Object.fromEntries(
    RATER_IDS.map((id, i) => [
      id,
      {
        n_used: 1490,
        metrics: metricBlock(rand, i),
        roc_auc: Math.round(rand() * 1000) / 1000,
        pr_auc: Math.round(rand() * 1000) / 1000,
      },
    ]),
  );
  const configs = ['top3', 'full9', 'eight_llm', 'single'];
  const evaluations = Object.fromEntries(
    configs.map((name, i) => [
      name,
      {
        n_decided: 1726,
        n_undecided: 0,
        metrics: metricBlock(rand, 100 + i),
      },
    ]),
  );
  const comparisons = [];
  for (let i = 0; i < configs.length; i += 1) {
    for (let j = i + 1; j < configs.length; j += 1) {
      const mccA = Math.round(rand() * 1000) / 1000;
      const mccB = Math.round(rand() * 1000) / 1000;
      comparisons.push({
        reference_a: configs[i]!,
        reference_b: configs[j]!,
        mcc_a: mccA,
        mcc_b: mccB,
        delta: Math.round((mccA - mccB) * 1000) / 1000,
        p_value: Math.round(rand() * 1000) / 1000,
        delta_low: Math.round((mccA - mccB - 0.05) * 1000) / 1000,
        delta_high: Math.round((mccA - mccB + 0.05) * 1000) / 1000,
        n_cases: 1726,
        replicates_used: 1000,
        replicates_excluded: 0,
        n_boot: 1000,
        seed: 10 * i + j,
      });
    }
  }
  return {
    reference_n: 1490,
    meta: {
      n_boot: 1000,
      base_seed: 8,
      panel_consensus_config: 'full9',
      intersection: false,
      consensus_configs: configs,
    },
    panel: {
      models,
      matrix_n: 1490,
      skipped: [],
      matrices: makeMatrices(),
    },
    detector: { evaluations, comparisons },
  };
}

export function makeQueue(): QueuePayload {
  const impressions = [
    'Acute right frontal intraparenchymal hemorrhage with surrounding edema.',
    'No acute intracranial hemorrhage. Chronic microvascular change.',
    'Subtle left convexity subdural collection, likely acute.',
    'Postoperative changes; no new hemorrhage identified.',
    'Indeterminate hyperdensity along the falx; correlate clinically.',
    'Normal noncontrast head CT.',
  ];
  return {
    config_name: 'full9',
    items: impressions.map((text, i) => ({
      accession: `FX${String(i + 1).padStart(4, '0')}`,
      impression_text: text,
      ai_result: i % 2 === 0,
      consensus_decision: i < 3 ? (i % 2 === 0 ? 'negative' : 'positive') : (i % 2 === 0 ? 'positive' : 'negative'),
      discordant: i < 3,
      current_label: null,
      queue_position: i + 1,
    })),
  };
}
