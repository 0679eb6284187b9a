// Review session state: queue position, optimistic advance, and a bounded
// local retry queue so a flaky connection never loses verdicts but also
// cannot leave a long trail of unsynced work behind the reviewer.

import { ApiClient, ConflictError, type ReviewItem } from './api.js';

export interface PendingVerdict {
  annotationId: number;
  verdict: 'correct' | 'incorrect';
  note: string;
}

export interface SubmitResult {
  status: 'synced' | 'queued' | 'conflict' | 'blocked';
  detail?: string;
}

export class ReviewSession {
  items: ReviewItem[] = [];
  position = 0;
  pendingSync: PendingVerdict[] = [];

  constructor(
    private api: ApiClient,
    readonly maxUnsynced: number = 3,
  ) {}

  async load(): Promise<void> {
    const page = await this.api.listItems('pending', 500);
    this.items = page.items;
    this.position = 0;
  }

  get current(): ReviewItem | null {
    return this.items[this.position] ?? null;
  }

  get total(): number {
    return this.items.length;
  }

  advance(): void {
    if (this.position < this.items.length) this.position++;
  }

  /**
   * Submit a verdict for the current item. Network failure queues it locally
   * and still advances, but only while the unsynced backlog stays inside the
   * window; a 409 surfaces as a conflict and refetches the item.
   */
  async submit(verdict: 'correct' | 'incorrect', note = ''): Promise<SubmitResult> {
    const item = this.current;
    if (!item) return { status: 'blocked', detail: 'queue exhausted' };
    if (this.pendingSync.length >= this.maxUnsynced) {
      const flushed = await this.flushPending();
      if (!flushed) return { status: 'blocked', detail: 'too many unsynced verdicts' };
    }
    try {
      await this.api.postVerdict(item.annotation_id, verdict, note);
    } catch (err) {
      if (err instanceof ConflictError) {
        const fresh = await this.api.getItem(item.annotation_id);
        this.items[this.position] = fresh;
        return { status: 'conflict', detail: err.message };
      }
      this.pendingSync.push({ annotationId: item.annotation_id, verdict, note });
      this.advance();
      return { status: 'queued', detail: String(err) };
    }
    this.advance();
    return { status: 'synced' };
  }

  /** Retry every queued verdict; returns true when the backlog is empty. */
  async flushPending(): Promise<boolean> {
    const remaining: PendingVerdict[] = [];
    for (const pending of this.pendingSync) {
      try {
        await this.api.postVerdict(pending.annotationId, pending.verdict, pending.note);
      } catch (err) {
        if (err instanceof ConflictError) continue; // someone else reviewed it
        remaining.push(pending);
      }
    }
    this.pendingSync = remaining;
    return remaining.length === 0;
  }

  /** Skip the current item (used for malformed masks). */
  skip(): void {
    this.advance();
  }
}
