/**
 * Thin typed client for the monitoring API.
 *
 * One method per endpoint, no caching, no retries: a failed call is
 * surfaced to the caller so the UI can show it and leave state alone.
 */

import type {
  LabelAck,
  LabelCategory,
  MatricesPayload,
  MetricsSnapshot,
  QueuePayload,
  ReferenceSummary,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

interface ErrorBody {
  error?: string;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string | null = null,
  ) {}

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h['Content-Type'] = 'application/json';
    if (this.token !== null) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, init);
    const body: unknown = await response.json();
    if (!response.ok) {
      const message = (body as ErrorBody).error ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  getQueue(): Promise<QueuePayload> {
    return this.request<QueuePayload>('/api/queue', {
      headers: this.headers(false),
    });
  }

  postLabel(
    accession: string,
    category: LabelCategory,
    reviewerId: string,
  ): Promise<LabelAck> {
    return this.request<LabelAck>('/api/labels', {
      method: 'POST',
      headers: this.headers(true),
      body: JSON.stringify({
        accession,
        category,
        reviewer_id: reviewerId,
      }),
    });
  }

  getLatestMetrics(): Promise<MetricsSnapshot> {
    return this.request<MetricsSnapshot>('/api/metrics/latest', {
      headers: this.headers(false),
    });
  }

  getLatestMatrices(): Promise<MatricesPayload> {
    return this.request<MatricesPayload>('/api/matrices/latest', {
      headers: this.headers(false),
    });
  }

  getReferenceSummary(): Promise<ReferenceSummary> {
    return this.request<ReferenceSummary>('/api/reference/summary', {
      headers: this.headers(false),
    });
  }
}
