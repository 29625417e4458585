/**
 * Read-only metrics tables.
 *
 * Every number on screen is an API field: cells are built through
 * metricCell, which stores the exact wire value in data-value next to
 * the formatted text. Nothing is aggregated, averaged, or otherwise
 * derived on the client.
 */

import { fmtCi, fmtMetric, fmtPValue, metricCell } from './format.js';
import type { MetricName, MetricsSnapshot } from './types.js';
import { METRIC_NAMES } from './types.js';

const METRIC_HEADERS: Record<MetricName, string> = {
  accuracy: 'Acc',
  precision_ppv: 'PPV',
  recall_sensitivity: 'Sens',
  specificity: 'Spec',
  npv: 'NPV',
  f1: 'F1',
  cohens_kappa: 'Kappa',
  mcc: 'MCC',
  composite: 'Composite',
};

function headerRow(doc: Document, labels: string[]): HTMLTableRowElement {
  const tr = doc.createElement('tr');
  for (const label of labels) {
    const th = doc.createElement('th');
    th.textContent = label;
    tr.appendChild(th);
  }
  return tr;
}

export function renderRunMeta(
  doc: Document,
  root: HTMLElement,
  snapshot: MetricsSnapshot,
): void {
  root.textContent = '';
  const dl = doc.createElement('dl');
  dl.className = 'run-meta';
  const entries: Array<[string, string | number]> = [
    ['reference n', snapshot.reference_n],
    ['bootstrap replicates', snapshot.meta.n_boot],
    ['base seed', snapshot.meta.base_seed],
    ['panel consensus', snapshot.meta.panel_consensus_config],
  ];
  for (const [term, value] of entries) {
    const dt = doc.createElement('dt');
    dt.textContent = term;
    const dd = doc.createElement('dd');
    dd.dataset.value = String(value);
    dd.textContent = String(value);
    dl.append(dt, dd);
  }
  root.appendChild(dl);
}

export function renderPanelTable(
  doc: Document,
  root: HTMLElement,
  snapshot: MetricsSnapshot,
): void {
  root.textContent = '';
  const table = doc.createElement('table');
  table.className = 'metrics-table panel-table';
  table.appendChild(
    headerRow(doc, [
      'Model',
      'n',
      ...METRIC_NAMES.map((m) => METRIC_HEADERS[m]),
      'ROC AUC',
      'PR AUC',
    ]),
  );

  for (const [modelId, ev] of Object.entries(snapshot.panel.models).sort()) {
    const tr = doc.createElement('tr');
    tr.dataset.model = modelId;
    const name = doc.createElement('td');
    name.textContent = modelId;
    tr.appendChild(name);
    tr.appendChild(metricCell(doc, ev.n_used, String(ev.n_used)));
    for (const metric of METRIC_NAMES) {
      const cell = metricCell(doc, ev.metrics[metric]);
      const ci = ev.metrics.cis[metric];
      if (ci) cell.title = `95% CI ${fmtCi(ci.low, ci.high)}`;
      tr.appendChild(cell);
    }
    tr.appendChild(metricCell(doc, ev.roc_auc));
    tr.appendChild(metricCell(doc, ev.pr_auc));
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderDetectorTable(
  doc: Document,
  root: HTMLElement,
  snapshot: MetricsSnapshot,
): void {
  root.textContent = '';
  const table = doc.createElement('table');
  table.className = 'metrics-table detector-table';
  table.appendChild(
    headerRow(doc, [
      'Reference definition',
      'n decided',
      'n undecided',
      ...METRIC_NAMES.map((m) => METRIC_HEADERS[m]),
    ]),
  );

  for (const [configName, ev] of Object.entries(
    snapshot.detector.evaluations,
  ).sort()) {
    const tr = doc.createElement('tr');
    tr.dataset.config = configName;
    const name = doc.createElement('td');
    name.textContent = configName;
    tr.appendChild(name);
    tr.appendChild(metricCell(doc, ev.n_decided, String(ev.n_decided)));
    tr.appendChild(metricCell(doc, ev.n_undecided, String(ev.n_undecided)));
    for (const metric of METRIC_NAMES) {
      const cell = metricCell(doc, ev.metrics[metric]);
      const ci = ev.metrics.cis[metric];
      if (ci) cell.title = `95% CI ${fmtCi(ci.low, ci.high)}`;
      tr.appendChild(cell);
    }
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderComparisonsTable(
  doc: Document,
  root: HTMLElement,
  snapshot: MetricsSnapshot,
): void {
  root.textContent = '';
  if (snapshot.detector.comparisons.length === 0) return;
  const table = doc.createElement('table');
  table.className = 'metrics-table comparisons-table';
  table.appendChild(
    headerRow(doc, ['A', 'B', 'MCC A', 'MCC B', 'Delta', 'Delta 95% CI', 'p']),
  );
  for (const row of snapshot.detector.comparisons) {
    const tr = doc.createElement('tr');
    tr.dataset.pair = `${row.reference_a}|${row.reference_b}`;
    const a = doc.createElement('td');
    a.textContent = row.reference_a;
    const b = doc.createElement('td');
    b.textContent = row.reference_b;
    tr.append(a, b);
    tr.appendChild(metricCell(doc, row.mcc_a));
    tr.appendChild(metricCell(doc, row.mcc_b));
    tr.appendChild(metricCell(doc, row.delta));
    const ci = doc.createElement('td');
    ci.className = 'num';
    ci.dataset.low = String(row.delta_low);
    ci.dataset.high = String(row.delta_high);
    ci.textContent = `[${fmtMetric(row.delta_low)}, ${fmtMetric(row.delta_high)}]`;
    tr.appendChild(ci);
    tr.appendChild(metricCell(doc, row.p_value, fmtPValue(row.p_value)));
    table.appendChild(tr);
  }
  root.appendChild(table);
}
