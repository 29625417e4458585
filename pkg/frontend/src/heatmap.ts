/**
 * Agreement heatmaps.
 *
 * Both matrices (kappa and Jaccard) are drawn with one shared color
 * scale so cell shades are comparable across the two panels. The scale
 * maps the combined value range onto a single hue ramp; the exact wire
 * value of every cell rides along in data-value and in the hover title.
 */

import { fmtMetric } from './format.js';
import type { MatricesPayload } from './types.js';

export type ColorScale = (value: number) => string;

/** One scale spanning the combined range of every cell in both
 * matrices. Degenerate ranges (all cells equal) pin to full color. */
export function sharedColorScale(matrices: MatricesPayload): ColorScale {
  let min = Infinity;
  let max = -Infinity;
  for (const matrix of [matrices.kappa, matrices.jaccard]) {
    for (const row of matrix) {
      for (const value of row) {
        if (Number.isNaN(value)) continue;
        if (value < min) min = value;
        if (value > max) max = value;
      }
    }
  }
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    return () => 'hsl(0, 0%, 85%)';
  }
  const span = max - min;
  return (value: number): string => {
    if (Number.isNaN(value)) return 'hsl(0, 0%, 85%)';
    const t = span === 0 ? 1 : (value - min) / span;
    const lightness = 92 - 52 * Math.max(0, Math.min(1, t));
    return `hsl(215, 65%, ${lightness.toFixed(1)}%)`;
  };
}

export function renderHeatmap(
  doc: Document,
  root: HTMLElement,
  title: string,
  raterIds: string[],
  matrix: number[][],
  scale: ColorScale,
): void {
  root.textContent = '';

  const caption = doc.createElement('h3');
  caption.textContent = title;
  root.appendChild(caption);

  const table = doc.createElement('table');
  table.className = 'heatmap';
  table.dataset.kind = title.toLowerCase();

  const head = doc.createElement('tr');
  head.appendChild(doc.createElement('th'));
  for (const rater of raterIds) {
    const th = doc.createElement('th');
    th.className = 'rater-col';
    th.dataset.rater = rater;
    th.textContent = rater;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const [i, rater] of raterIds.entries()) {
    const tr = doc.createElement('tr');
    const th = doc.createElement('th');
    th.className = 'rater-row';
    th.dataset.rater = rater;
    th.textContent = rater;
    tr.appendChild(th);
    const row = matrix[i] ?? [];
    for (const [j, other] of raterIds.entries()) {
      const value = row[j] ?? NaN;
      const td = doc.createElement('td');
      td.className = 'heat-cell';
      td.dataset.row = rater;
      td.dataset.col = other;
      td.dataset.value = String(value);
      td.title = `${rater} vs ${other}: ${fmtMetric(value)}`;
      td.style.backgroundColor = scale(value);
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderHeatmapPair(
  doc: Document,
  kappaRoot: HTMLElement,
  jaccardRoot: HTMLElement,
  matrices: MatricesPayload,
): void {
  const scale = sharedColorScale(matrices);
  renderHeatmap(doc, kappaRoot, 'Kappa', matrices.rater_ids, matrices.kappa, scale);
  renderHeatmap(
    doc,
    jaccardRoot,
    'Jaccard',
    matrices.rater_ids,
    matrices.jaccard,
    scale,
  );
}

export function renderHeatmapEmptyState(doc: Document, root: HTMLElement): void {
  root.textContent = '';
  const empty = doc.createElement('div');
  empty.className = 'empty-state';
  empty.textContent = 'No evaluation run yet.';
  root.appendChild(empty);
}
