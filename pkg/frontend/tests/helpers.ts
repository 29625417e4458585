import { ApiClient } from '../src/api.js';
import { Dashboard, type DashboardRoots } from '../src/app.js';

export function makeRoots(doc: Document): DashboardRoots {
  const make = (id: string): HTMLElement => {
    const el = doc.createElement('div');
    el.id = id;
    doc.body.appendChild(el);
    return el;
  };
  return {
    queueList: make('queue-list'),
    queueDetail: make('queue-detail'),
    errorBanner: make('error-banner'),
    runMeta: make('run-meta'),
    panelTable: make('panel-table'),
    detectorTable: make('detector-table'),
    comparisonsTable: make('comparisons-table'),
    kappaHeatmap: make('kappa-heatmap'),
    jaccardHeatmap: make('jaccard-heatmap'),
  };
}

export function makeDashboard(baseUrl: string): {
  dashboard: Dashboard;
  roots: DashboardRoots;
} {
  document.body.textContent = '';
  const roots = makeRoots(document);
  const dashboard = new Dashboard(new ApiClient(baseUrl), document, roots);
  return { dashboard, roots };
}

export function deepFreeze<T>(value: T): T {
  if (value !== null && typeof value === 'object') {
    for (const key of Object.getOwnPropertyNames(value)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
    Object.freeze(value);
  }
  return value;
}
