/**
 * Client-side session state: the label queue, budget display, and submit
 * flow with optimistic advance, rollback on rejection, and an idempotency
 * guard (one in-flight mutation; repeat submits of the same entry are
 * dropped until the first settles).
 *
 * Every displayed number (budget, cycle, dice) comes from a service
 * response; the client never fabricates state.
 */

import { Api, ApiError, QueueEntry, SessionStatus } from "./api.js";

export interface SubmitResult {
  ok: boolean;
  error?: string;
  budgetSeconds?: number;
}

export class SessionState {
  queue: QueueEntry[] = [];
  exhausted = false;
  budgetSeconds = 0;
  status: SessionStatus | null = null;
  lastError: string | null = null;

  private inFlight: string | null = null; // idempotency key of the pending mutation

  constructor(
    private api: Api,
    public sessionId: string,
  ) {}

  entryKey(entry: QueueEntry): string {
    return `${entry.image_id}:${entry.region_index}`;
  }

  get current(): QueueEntry | null {
    return this.queue.length ? this.queue[0] : null;
  }

  async refreshQueue(k = 5): Promise<void> {
    const view = await this.api.getQueue(this.sessionId, k);
    this.queue = view.entries;
    this.exhausted = view.exhausted;
  }

  async refreshStatus(): Promise<SessionStatus> {
    this.status = await this.api.getStatus(this.sessionId);
    this.budgetSeconds = this.status.budget_seconds;
    return this.status;
  }

  /**
   * Submit the current entry. Optimistically advances the queue, restores
   * the entry at the front on a 409/422, and ignores re-submits while the
   * first request is in flight.
   */
  async submit(body: { points?: [number, number][]; background?: boolean }): Promise<SubmitResult> {
    const entry = this.current;
    if (!entry) return { ok: false, error: "queue is empty" };
    const key = this.entryKey(entry);
    if (this.inFlight === key) return { ok: false, error: "submit already in flight" };
    this.inFlight = key;
    this.queue = this.queue.slice(1); // optimistic advance
    try {
      const resp = await this.api.postLabel(
        this.sessionId,
        entry.image_id,
        entry.region_index,
        body,
      );
      this.budgetSeconds = resp.budget_seconds;
      this.lastError = null;
      return { ok: true, budgetSeconds: resp.budget_seconds };
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
        this.queue = [entry, ...this.queue]; // reinstate with the error shown
        this.lastError = err.detail;
        return { ok: false, error: err.detail };
      }
      this.queue = [entry, ...this.queue]; // network failure: retry affordance
      this.lastError = err instanceof Error ? err.message : String(err);
      return { ok: false, error: this.lastError };
    } finally {
      this.inFlight = null;
    }
  }

  async train(): Promise<SubmitResult> {
    try {
      await this.api.postTrain(this.sessionId);
      return { ok: true };
    } catch (err) {
      const msg = err instanceof ApiError ? err.detail : String(err);
      this.lastError = msg;
      return { ok: false, error: msg };
    }
  }

  /** Poll status until the training job leaves the running state. */
  async pollUntilIdle(intervalMs = 300, timeoutMs = 600000): Promise<SessionStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.refreshStatus();
      if (status.job.state !== "training") return status;
      if (Date.now() > deadline) throw new Error("training poll timed out");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
