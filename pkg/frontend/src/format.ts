/** Display formatting only. Anything numeric keeps its exact wire value
 * in a data attribute; these helpers decide how it looks, never what
 * it is. */

export function fmtMetric(value: number): string {
  if (Number.isNaN(value)) return 'n/a';
  return value.toFixed(3);
}

export function fmtPValue(value: number): string {
  if (Number.isNaN(value)) return 'n/a';
  if (value < 0.001) return '<0.001';
  return value.toFixed(3);
}

export function fmtCi(low: number, high: number): string {
  return `[${fmtMetric(low)}, ${fmtMetric(high)}]`;
}

/**
 * A numeric table cell: human-readable text plus the exact wire value
 * in data-value, so tests (and curious users) can trace every number
 * on screen back to the API field it came from.
 */
export function metricCell(
  doc: Document,
  value: number,
  text?: string,
): HTMLTableCellElement {
  const td = doc.createElement('td');
  td.className = 'num';
  td.dataset.value = String(value);
  td.textContent = text ?? fmtMetric(value);
  return td;
}
