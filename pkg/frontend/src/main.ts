/** Browser bootstrap: wire the dashboard to the page and start polling.
 * The API origin defaults to the serving host; override with
 * ?api=http://host:port when the dashboard is opened from elsewhere. */

import { ApiClient } from './api.js';
import { Dashboard, type DashboardRoots } from './app.js';
import type { QueueFilter } from './queueView.js';

function must(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id} in index.html`);
  return el;
}

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get('api');
  return override ?? window.location.origin;
}

function start(): void {
  const roots: DashboardRoots = {
    queueList: must('queue-list'),
    queueDetail: must('queue-detail'),
    errorBanner: must('error-banner'),
    runMeta: must('run-meta'),
    panelTable: must('panel-table'),
    detectorTable: must('detector-table'),
    comparisonsTable: must('comparisons-table'),
    kappaHeatmap: must('kappa-heatmap'),
    jaccardHeatmap: must('jaccard-heatmap'),
  };
  const dashboard = new Dashboard(new ApiClient(apiBase()), document, roots);

  const reviewer = must('reviewer-id') as HTMLInputElement;
  reviewer.addEventListener('change', () => {
    dashboard.reviewerId = reviewer.value || 'reviewer';
  });
  dashboard.reviewerId = reviewer.value || 'reviewer';

  for (const button of document.querySelectorAll<HTMLButtonElement>('[data-filter]')) {
    button.addEventListener('click', () => {
      dashboard.setFilter(button.dataset.filter as QueueFilter);
    });
  }
  for (const button of document.querySelectorAll<HTMLButtonElement>('[data-category]')) {
    button.addEventListener('click', () => {
      void dashboard.label(button.dataset.category as never);
    });
  }

  dashboard.attachKeyboard();
  void dashboard
    .refreshQueue()
    .catch((err) => dashboard.showError(String(err)));
  void dashboard
    .refreshMetrics()
    .catch((err) => dashboard.showError(String(err)));
  window.setInterval(() => {
    void dashboard.refreshMetrics().catch(() => undefined);
  }, 30000);
}

document.addEventListener('DOMContentLoaded', start);
