/**
 * Typed client for the annotation service HTTP API.
 *
 * The fetch function is injectable so tests can run without a network; the
 * default is the global fetch.
 */

import type { Rect } from "./transform.js";

export interface QueueEntry {
  image_id: string;
  region_index: number;
  score: number | null;
  rect: Rect;
  crop_png: string; // base64
  slice_png: string;
  entropy_png: string | null;
}

export interface QueueView {
  entries: QueueEntry[];
  exhausted: boolean;
}

export interface JobStatus {
  state: "idle" | "training" | "failed";
  reason: string | null;
}

export interface SessionStatus {
  id: string;
  cycle: number;
  budget_seconds: number;
  labeled_regions: number;
  val_dice: number | null;
  queue_length: number;
  job: JobStatus;
}

export interface LabelResponse {
  image_id: string;
  region_index: number;
  state: string;
  budget_seconds: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        detail = body.detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    const text = await resp.text();
    try {
      return JSON.parse(text) as T;
    } catch {
      return text as unknown as T; // CSV endpoints
    }
  }

  createSession(manifest: string, config: object): Promise<{ id: string }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ manifest, config }),
    });
  }

  getQueue(sessionId: string, k = 5): Promise<QueueView> {
    return this.request(`/sessions/${sessionId}/queue?k=${k}`);
  }

  postLabel(
    sessionId: string,
    imageId: string,
    regionIndex: number,
    body: { points?: [number, number][]; background?: boolean },
  ): Promise<LabelResponse> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, region_index: regionIndex, ...body }),
    });
  }

  postTrain(sessionId: string): Promise<{ status: string }> {
    return this.request(`/sessions/${sessionId}/train`, { method: "POST" });
  }

  getStatus(sessionId: string): Promise<SessionStatus> {
    return this.request(`/sessions/${sessionId}/status`);
  }

  getCurveCsv(sessionId: string): Promise<string> {
    return this.request(`/sessions/${sessionId}/curve`);
  }
}
