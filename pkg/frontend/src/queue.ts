import type { ScorePayload } from "./types.js";
import type { DraftStore } from "./state.js";

const QUEUE_KEY = "rating-submit-queue";

export type SubmitFn = (scores: ScorePayload[]) => Promise<unknown>;

/**
 * Offline-tolerant submit queue: failed batches persist locally and are
 * flushed in order on the next successful connection.
 */
export class SubmitQueue {
  constructor(
    private store: DraftStore,
    private submit: SubmitFn,
  ) {}

  pending(): ScorePayload[][] {
    const raw = this.store.getItem(QUEUE_KEY);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as ScorePayload[][];
    } catch {
      return [];
    }
  }

  private persist(batches: ScorePayload[][]): void {
    if (batches.length === 0) {
      this.store.removeItem(QUEUE_KEY);
    } else {
      this.store.setItem(QUEUE_KEY, JSON.stringify(batches));
    }
  }

  /** Returns true when the batch (and any queued ones) reached the server. */
  async push(batch: ScorePayload[]): Promise<boolean> {
    const batches = [...this.pending(), batch];
    this.persist(batches);
    return this.flush();
  }

  async flush(): Promise<boolean> {
    const batches = this.pending();
    while (batches.length > 0) {
      try {
        await this.submit(batches[0]);
      } catch {
        this.persist(batches);
        return false;
      }
      batches.shift();
    }
    this.persist(batches);
    return true;
  }
}
