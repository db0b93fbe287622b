/**
 * Typed client for the session service. Every console action maps to exactly
 * one call here; the console never recomputes inference on its own.
 */

export interface PerCategoryBelief {
  phase_marginals: Record<string, number>;
  task_marginals: Record<string, Record<string, number>>;
  log_likelihood: number;
  joint?: number[][];
}

export interface BeliefPayload {
  session: string;
  entry: string;
  t: number;
  closed: boolean;
  phase_marginals: Record<string, number>;
  category_weights: Record<string, number>;
  per_category: Record<string, PerCategoryBelief>;
  state_hash: string;
  evidence?: Record<string, number>;
  duplicate?: boolean;
}

export interface TimelinePayload {
  session: string;
  columns: BeliefPayload[];
  state_hash: string;
}

export interface WhatIfRow {
  decision: string;
  score: number;
}

export interface WhatIfResponse {
  session: string;
  ranking: WhatIfRow[];
  state_hash: string;
  state_unchanged: boolean;
}

export interface PriorSpec {
  kind: "point" | "uniform" | "phases";
  phase?: string;
  tasks?: Record<string, string>;
  probs?: Record<string, number>;
}

export interface CreateSessionBody {
  entry: string;
  category?: string;
  mixture?: Record<string, number>;
  prior?: PriorSpec;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
  }
}

export interface StreamHandle {
  close(): void;
  done: Promise<void>;
}

export class ApiClient {
  constructor(private readonly baseUrl: string, private readonly token?: string) {}

  private headers(json = true): Record<string, string> {
    const out: Record<string, string> = {};
    if (json) out["content-type"] = "application/json";
    if (this.token) out.authorization = `Bearer ${this.token}`;
    return out;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      const detail = (payload as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(response.status, detail.code ?? "error",
        detail.message ?? response.statusText);
    }
    return payload as T;
  }

  createSession(body: CreateSessionBody): Promise<BeliefPayload> {
    return this.request("POST", "/v1/sessions", body);
  }

  getBelief(sessionId: string, includeJoint = false): Promise<BeliefPayload> {
    const suffix = includeJoint ? "?include_joint=true" : "";
    return this.request("GET", `/v1/sessions/${sessionId}/belief${suffix}`);
  }

  getTimeline(sessionId: string): Promise<TimelinePayload> {
    return this.request("GET", `/v1/sessions/${sessionId}/timeline`);
  }

  postObservation(sessionId: string, t: number,
                  channels: Record<string, string | null>): Promise<BeliefPayload> {
    return this.request("POST", `/v1/sessions/${sessionId}/observations`, { t, channels });
  }

  whatIf(sessionId: string, decisions: string[], utility: string,
         horizon: number): Promise<WhatIfResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/what-if`,
      { decisions, utility, horizon });
  }

  closeIncident(sessionId: string, records: unknown[], category?: string) {
    return this.request("POST", `/v1/sessions/${sessionId}/close`,
      { records, ...(category ? { category } : {}) });
  }

  libraryIndex(): Promise<{ side: string; iteration: number; order: string[] }> {
    return this.request("GET", "/v1/library");
  }

  getEntry(entryId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/v1/library/entries/${entryId}`);
  }

  /**
   * Subscribe to the belief stream. Events arrive strictly in push order;
   * the first event is the current belief.
   */
  attach(sessionId: string, onEvent: (payload: BeliefPayload) => void): StreamHandle {
    const controller = new AbortController();
    const done = (async () => {
      const response = await fetch(`${this.baseUrl}/v1/sessions/${sessionId}/stream`, {
        headers: this.headers(false),
        signal: controller.signal,
      });
      if (!response.ok || response.body === null) {
        throw new ApiError(response.status, "stream-failed", "cannot attach to the session");
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { value, done: finished } = await reader.read();
        if (finished) return;
        buffer += decoder.decode(value, { stream: true });
        let cut;
        while ((cut = buffer.indexOf("\n\n")) >= 0) {
          const chunk = buffer.slice(0, cut);
          buffer = buffer.slice(cut + 2);
          for (const line of chunk.split("\n")) {
            if (line.startsWith("data: ")) {
              onEvent(JSON.parse(line.slice(6)) as BeliefPayload);
            }
          }
        }
      }
    })().catch((error: unknown) => {
      if (!controller.signal.aborted) throw error;
    });
    return { close: () => controller.abort(), done };
  }
}
