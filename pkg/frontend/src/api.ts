import type { RatingItem, ScorePayload, SessionView } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class HttpError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!res.ok) {
      throw new HttpError(res.status, await res.text());
    }
    return (await res.json()) as T;
  }

  createSession(manifest: string, rater: string, seed?: number): Promise<SessionView> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ manifest, rater, seed }),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}`);
  }

  async nextItem(id: string): Promise<RatingItem | null> {
    const out = await this.request<{ done: boolean; item: RatingItem | null }>(
      `/sessions/${id}/next-item`,
    );
    return out.item;
  }

  submitScores(scores: ScorePayload[]): Promise<{ ok: boolean }> {
    return this.request("/scores", {
      method: "PUT",
      body: JSON.stringify({ scores }),
    });
  }

  complete(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}/complete`, { method: "POST" });
  }

  /**
   * Unblinding guard: the client refuses to call the reveal endpoint
   * while the session it knows about is still open.
   */
  reveal(session: SessionView): Promise<unknown> {
    if (session.status !== "complete") {
      return Promise.reject(new Error("refusing to reveal an open session"));
    }
    return this.request(`/sessions/${session.id}/reveal`, { method: "POST" });
  }

  caseMeta(id: string, caseId: string): Promise<{ n_slices: number }> {
    return this.request(`/sessions/${id}/cases/${caseId}/meta`);
  }

  sliceUrl(
    sessionId: string,
    caseId: string,
    alias: string,
    k: number,
    overlay: boolean,
  ): string {
    const suffix = overlay ? "" : "?overlay=0";
    return `${this.baseUrl}/sessions/${sessionId}/cases/${caseId}/aliases/${alias}/slices/${k}.png${suffix}`;
  }
}
