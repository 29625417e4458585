/**
 * Dashboard controller: owns the view models, talks to the API, and
 * re-renders the affected panes after every server round-trip.
 *
 * Labeling is strictly server-first: the POST must succeed before the
 * queue is refetched, and a failure leaves the queue position and the
 * rendered state untouched apart from the error banner.
 */

import { ApiClient, ApiError } from './api.js';
import {
  renderHeatmapEmptyState,
  renderHeatmapPair,
} from './heatmap.js';
import { bindReviewKeys } from './keyboard.js';
import {
  renderComparisonsTable,
  renderDetectorTable,
  renderPanelTable,
  renderRunMeta,
} from './metricsView.js';
import {
  QueueViewModel,
  renderQueueDetail,
  renderQueueList,
  type QueueFilter,
} from './queueView.js';
import type { LabelCategory } from './types.js';

export interface DashboardRoots {
  queueList: HTMLElement;
  queueDetail: HTMLElement;
  errorBanner: HTMLElement;
  runMeta: HTMLElement;
  panelTable: HTMLElement;
  detectorTable: HTMLElement;
  comparisonsTable: HTMLElement;
  kappaHeatmap: HTMLElement;
  jaccardHeatmap: HTMLElement;
}

export class Dashboard {
  queue: QueueViewModel | null = null;
  reviewerId = 'reviewer';
  private unbindKeys: (() => void) | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly doc: Document,
    private readonly roots: DashboardRoots,
  ) {}

  attachKeyboard(): void {
    this.unbindKeys?.();
    this.unbindKeys = bindReviewKeys(this.doc, {
      onLabel: (category) => void this.label(category),
      onNext: () => {
        this.queue?.next();
        this.renderQueue();
      },
      onPrevious: () => {
        this.queue?.previous();
        this.renderQueue();
      },
    });
  }

  detachKeyboard(): void {
    this.unbindKeys?.();
    this.unbindKeys = null;
  }

  setFilter(filter: QueueFilter): void {
    this.queue?.setFilter(filter);
    this.renderQueue();
  }

  async refreshQueue(): Promise<void> {
    const payload = await this.client.getQueue();
    if (this.queue === null) {
      this.queue = new QueueViewModel(payload);
    } else {
      this.queue.replacePayload(payload);
    }
    this.renderQueue();
  }

  async refreshMetrics(): Promise<void> {
    try {
      const snapshot = await this.client.getLatestMetrics();
      renderRunMeta(this.doc, this.roots.runMeta, snapshot);
      renderPanelTable(this.doc, this.roots.panelTable, snapshot);
      renderDetectorTable(this.doc, this.roots.detectorTable, snapshot);
      renderComparisonsTable(this.doc, this.roots.comparisonsTable, snapshot);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.roots.runMeta.textContent = 'No evaluation run yet.';
        this.roots.panelTable.textContent = '';
        this.roots.detectorTable.textContent = '';
        this.roots.comparisonsTable.textContent = '';
      } else {
        throw error;
      }
    }
    try {
      const matrices = await this.client.getLatestMatrices();
      renderHeatmapPair(
        this.doc,
        this.roots.kappaHeatmap,
        this.roots.jaccardHeatmap,
        matrices,
      );
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        renderHeatmapEmptyState(this.doc, this.roots.kappaHeatmap);
        renderHeatmapEmptyState(this.doc, this.roots.jaccardHeatmap);
      } else {
        throw error;
      }
    }
  }

  /** POST the category for the current item, then refetch the queue and
   * advance to the next unlabeled case. On failure: banner, no motion. */
  async label(category: LabelCategory): Promise<void> {
    const item = this.queue?.current;
    if (!this.queue || !item) return;
    try {
      await this.client.postLabel(item.accession, category, this.reviewerId);
    } catch (error) {
      this.showError(
        error instanceof Error ? error.message : 'label request failed',
      );
      return;
    }
    this.clearError();
    await this.refreshQueue();
    this.queue.advanceToUnlabeled();
    this.renderQueue();
  }

  renderQueue(): void {
    if (!this.queue) return;
    renderQueueList(this.doc, this.roots.queueList, this.queue);
    renderQueueDetail(this.doc, this.roots.queueDetail, this.queue);
  }

  showError(message: string): void {
    this.roots.errorBanner.textContent = message;
    this.roots.errorBanner.classList.add('visible');
  }

  clearError(): void {
    this.roots.errorBanner.textContent = '';
    this.roots.errorBanner.classList.remove('visible');
  }
}
