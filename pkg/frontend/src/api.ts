/**
 * Typed client over the identification service HTTP API.
 *
 * Every method resolves with parsed JSON on 2xx and rejects with an
 * ApiError carrying the status code otherwise, so callers can branch on
 * conflicts (409) versus hard failures.
 */

export interface SetSummary {
  set_id: string;
  n_objects: number;
  encoder_id: string;
}

export interface Candidate {
  object_id: string;
  score: number;
  thumbnail_url: string;
}

export interface ClassifyResponse {
  session_id: string;
  method: string;
  n_views: number;
  remaining: number;
  candidates: Candidate[];
}

export interface SessionState {
  session_id: string;
  set_id: string;
  remaining: number;
  remaining_ids: string[];
  history: HistoryEntry[];
}

export interface SessionSummary {
  session_id: string;
  set_id: string;
  remaining: number;
  confirmed: number;
}

export interface HistoryEntry {
  query_ref: string | null;
  predicted: string | null;
  confirmed_id: string;
  timestamp: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (typeof body?.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<{ status: string; encoder_loaded: boolean }> {
    return parse(await this.fetchImpl(this.url("/healthz")));
  }

  async listSets(): Promise<SetSummary[]> {
    return parse(await this.fetchImpl(this.url("/sets")));
  }

  async listSessions(): Promise<SessionSummary[]> {
    return parse(await this.fetchImpl(this.url("/sessions")));
  }

  async createSession(setId: string): Promise<{ session_id: string; remaining: number }> {
    const resp = await this.fetchImpl(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ set_id: setId }),
    });
    return parse(resp);
  }

  async getSession(sessionId: string): Promise<SessionState> {
    return parse(await this.fetchImpl(this.url(`/sessions/${sessionId}`)));
  }

  /**
   * Submit one or more photos of the object in hand. Multiple photos map
   * to server-side multi-view aggregation (score averaging by default).
   */
  async classify(
    sessionId: string,
    images: Blob[],
    options: { aggMethod?: string; topK?: number } = {},
  ): Promise<ClassifyResponse> {
    const form = new FormData();
    images.forEach((img, i) => form.append("images", img, `shot-${i}.png`));
    form.append("agg_method", options.aggMethod ?? "score_average");
    form.append("top_k", String(options.topK ?? 5));
    const resp = await this.fetchImpl(this.url(`/sessions/${sessionId}/classify`), {
      method: "POST",
      body: form,
    });
    return parse(resp);
  }

  async confirm(sessionId: string, objectId: string): Promise<{ remaining: number }> {
    const resp = await this.fetchImpl(this.url(`/sessions/${sessionId}/confirm`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ object_id: objectId }),
    });
    return parse(resp);
  }

  async undo(sessionId: string): Promise<{ restored: string; remaining: number }> {
    const resp = await this.fetchImpl(this.url(`/sessions/${sessionId}/undo`), {
      method: "POST",
    });
    return parse(resp);
  }
}
