/**
 * Review queue view model and renderer.
 *
 * The model holds the queue payload exactly as the server sent it;
 * navigation and filtering are cursor arithmetic over that array, never
 * edits to it. After a label is accepted the app refetches the queue,
 * so what is on screen is always server state, not an optimistic copy.
 */

import type { QueueItem, QueuePayload } from './types.js';

export type QueueFilter = 'all' | 'discordant' | 'unlabeled';

export class QueueViewModel {
  private payload: QueuePayload;
  private filter: QueueFilter = 'all';
  private cursor = 0;

  constructor(payload: QueuePayload) {
    this.payload = payload;
  }

  get configName(): string {
    return this.payload.config_name;
  }

  /** Every queue item, in server order. */
  get items(): readonly QueueItem[] {
    return this.payload.items;
  }

  get visibleItems(): readonly QueueItem[] {
    switch (this.filter) {
      case 'discordant':
        return this.payload.items.filter((it) => it.discordant);
      case 'unlabeled':
        return this.payload.items.filter((it) => it.current_label === null);
      default:
        return this.payload.items;
    }
  }

  get activeFilter(): QueueFilter {
    return this.filter;
  }

  setFilter(filter: QueueFilter): void {
    this.filter = filter;
    this.cursor = Math.min(this.cursor, Math.max(0, this.visibleItems.length - 1));
  }

  get labeledCount(): number {
    return this.payload.items.filter((it) => it.current_label !== null).length;
  }

  get totalCount(): number {
    return this.payload.items.length;
  }

  get complete(): boolean {
    return this.totalCount > 0 && this.labeledCount === this.totalCount;
  }

  get current(): QueueItem | null {
    return this.visibleItems[this.cursor] ?? null;
  }

  get cursorIndex(): number {
    return this.cursor;
  }

  next(): void {
    if (this.cursor < this.visibleItems.length - 1) this.cursor += 1;
  }

  previous(): void {
    if (this.cursor > 0) this.cursor -= 1;
  }

  /** Move the cursor to the first unlabeled visible item at or after
   * the current position, wrapping once; stay put if none exists. */
  advanceToUnlabeled(): void {
    const visible = this.visibleItems;
    for (let step = 1; step <= visible.length; step += 1) {
      const idx = (this.cursor + step) % visible.length;
      const item = visible[idx];
      if (item && item.current_label === null) {
        this.cursor = idx;
        return;
      }
    }
  }

  /** Swap in a fresh server payload, keeping the cursor on the same
   * accession when it is still visible. */
  replacePayload(payload: QueuePayload): void {
    const keep = this.current?.accession;
    this.payload = payload;
    if (keep !== undefined) {
      const idx = this.visibleItems.findIndex((it) => it.accession === keep);
      this.cursor = idx >= 0 ? idx : 0;
    } else {
      this.cursor = 0;
    }
    this.cursor = Math.min(this.cursor, Math.max(0, this.visibleItems.length - 1));
  }
}

function decisionBadge(doc: Document, decision: string): HTMLElement {
  const span = doc.createElement('span');
  span.className = `badge badge-${decision}`;
  span.textContent = decision;
  return span;
}

export function renderQueueList(
  doc: Document,
  root: HTMLElement,
  model: QueueViewModel,
): void {
  root.textContent = '';
  const list = doc.createElement('ol');
  list.className = 'queue-list';
  for (const [idx, item] of model.visibleItems.entries()) {
    const li = doc.createElement('li');
    li.className = 'queue-entry';
    li.dataset.accession = item.accession;
    li.dataset.discordant = String(item.discordant);
    li.dataset.labeled = String(item.current_label !== null);
    if (idx === model.cursorIndex) li.classList.add('selected');
    const label = item.current_label ? ` [${item.current_label.category}]` : '';
    li.textContent =
      `#${item.queue_position} ${item.accession}` +
      `${item.discordant ? ' (discordant)' : ''}${label}`;
    list.appendChild(li);
  }
  root.appendChild(list);
}

export function renderQueueDetail(
  doc: Document,
  root: HTMLElement,
  model: QueueViewModel,
): void {
  root.textContent = '';

  const progress = doc.createElement('div');
  progress.className = 'progress';
  progress.dataset.labeled = String(model.labeledCount);
  progress.dataset.total = String(model.totalCount);
  progress.textContent = `${model.labeledCount}/${model.totalCount} labeled`;
  root.appendChild(progress);

  if (model.complete) {
    const done = doc.createElement('div');
    done.className = 'completion';
    done.textContent = 'Review complete: every queued exam is labeled.';
    root.appendChild(done);
  }

  const item = model.current;
  if (item === null) {
    const empty = doc.createElement('div');
    empty.className = 'empty-state';
    empty.textContent = 'The review queue is empty.';
    root.appendChild(empty);
    return;
  }

  const head = doc.createElement('div');
  head.className = 'case-head';
  head.dataset.accession = item.accession;
  head.textContent = `${item.accession} `;
  if (item.discordant) {
    const flag = doc.createElement('span');
    flag.className = 'badge badge-discordant';
    flag.textContent = 'discordant';
    head.appendChild(flag);
  }
  root.appendChild(head);

  const verdicts = doc.createElement('div');
  verdicts.className = 'case-verdicts';
  verdicts.append(
    'detector: ',
    decisionBadge(doc, item.ai_result ? 'positive' : 'negative'),
    ' consensus: ',
    decisionBadge(doc, item.consensus_decision),
  );
  root.appendChild(verdicts);

  const impression = doc.createElement('blockquote');
  impression.className = 'impression';
  impression.textContent = item.impression_text;
  root.appendChild(impression);

  if (item.current_label) {
    const labeled = doc.createElement('div');
    labeled.className = 'current-label';
    labeled.textContent =
      `labeled ${item.current_label.category} by ${item.current_label.reviewer_id}`;
    root.appendChild(labeled);
  }
}
