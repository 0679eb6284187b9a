// Thin client over the review service; all accuracy arithmetic stays on the
// server, the console only renders what /report returns.

import type { RleMask } from './rle.js';

export interface ReviewItem {
  annotation_id: number;
  image_ref: string;
  rle: RleMask;
  entity_id: string;
  entity_label: string;
  hypernyms: string[];
  reference_kind: string;
  source_model: string;
  split: string;
  query: string;
  verdict: 'pending' | 'correct' | 'incorrect';
  note: string;
}

export interface ReportCell {
  correct: number;
  reviewed: number;
  accuracy: number;
  percent: number;
}

export interface Report {
  cells: Record<string, Record<string, ReportCell>>;
  kinds: string[];
  models: string[];
  overall: ReportCell | null;
  pending: number;
  total: number;
}

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ConflictError';
  }
}

export class ApiClient {
  constructor(private base: string = '') {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async listItems(status?: string, limit = 100, offset = 0): Promise<{ items: ReviewItem[]; total: number }> {
    const params = new URLSearchParams({ limit: String(limit), offset: String(offset) });
    if (status) params.set('status', status);
    const resp = await fetch(this.url(`/items?${params}`));
    if (!resp.ok) throw new Error(`listItems failed: ${resp.status}`);
    return resp.json();
  }

  async getItem(id: number): Promise<ReviewItem> {
    const resp = await fetch(this.url(`/items/${id}`));
    if (!resp.ok) throw new Error(`getItem ${id} failed: ${resp.status}`);
    return resp.json();
  }

  imageUrl(id: number): string {
    return this.url(`/items/${id}/image`);
  }

  async getMask(id: number): Promise<RleMask> {
    const resp = await fetch(this.url(`/items/${id}/mask`));
    if (!resp.ok) throw new Error(`getMask ${id} failed: ${resp.status}`);
    return resp.json();
  }

  async postVerdict(id: number, verdict: 'correct' | 'incorrect', note = '', force = false): Promise<ReviewItem> {
    const suffix = force ? '?force=true' : '';
    const resp = await fetch(this.url(`/items/${id}/verdict${suffix}`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ verdict, note }),
    });
    if (resp.status === 409) {
      const body = await resp.json().catch(() => ({ detail: 'conflict' }));
      throw new ConflictError(body.detail ?? 'conflict');
    }
    if (!resp.ok) throw new Error(`postVerdict ${id} failed: ${resp.status}`);
    return resp.json();
  }

  async getReport(): Promise<Report> {
    const resp = await fetch(this.url('/report'));
    if (!resp.ok) throw new Error(`report failed: ${resp.status}`);
    return resp.json();
  }
}
