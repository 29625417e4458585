export { ApiClient, ApiError } from './api.js';
export { Dashboard, type DashboardRoots } from './app.js';
export { fmtCi, fmtMetric, fmtPValue, metricCell } from './format.js';
export {
  renderHeatmap,
  renderHeatmapEmptyState,
  renderHeatmapPair,
  sharedColorScale,
  type ColorScale,
} from './heatmap.js';
export {
  KEY_TO_CATEGORY,
  bindReviewKeys,
  reviewKeyHandler,
  type ReviewKeyActions,
} from './keyboard.js';
export {
  renderComparisonsTable,
  renderDetectorTable,
  renderPanelTable,
  renderRunMeta,
} from './metricsView.js';
export {
  QueueViewModel,
  renderQueueDetail,
  renderQueueList,
  type QueueFilter,
} from './queueView.js';
export * from './types.js';
