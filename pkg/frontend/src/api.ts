// Thin REST client for the offcut service. All state lives server-side;
// at most one optimize request is in flight per session.

import type {
  EditMode,
  LockSize,
  OptimizeConfig,
  PathSnapshotJson,
  StatusJson,
  SuggestionJson,
} from "./types.js";

type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class OffcutClient {
  private optimizing = false;

  constructor(
    private base: string,
    private fetchImpl: FetchLike = globalThis.fetch.bind(globalThis),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(`${this.base}${path}`, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, `${init?.method ?? "GET"} ${path}: ${await resp.text()}`);
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createSession(designDoc: string): Promise<string> {
    const resp = await this.request("/sessions", { method: "POST", body: designDoc });
    const out = (await resp.json()) as { id: string };
    return out.id;
  }

  async design(sid: string): Promise<Record<string, unknown>> {
    return this.json(`/sessions/${sid}/design`);
  }

  async optimize(sid: string, config: OptimizeConfig): Promise<void> {
    if (this.optimizing) {
      throw new Error("an optimize request is already in flight");
    }
    this.optimizing = true;
    try {
      await this.post(`/sessions/${sid}/optimize`, config);
    } finally {
      this.optimizing = false;
    }
  }

  status(sid: string): Promise<StatusJson> {
    return this.json(`/sessions/${sid}/status`);
  }

  async waitIdle(sid: string, pollMs = 100, timeoutMs = 300000): Promise<void> {
    const t0 = Date.now();
    for (;;) {
      const st = await this.status(sid);
      if (st.status === "idle") return;
      if (Date.now() - t0 > timeoutMs) throw new Error("optimization timed out");
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }

  async suggestions(sid: string): Promise<SuggestionJson[]> {
    const out = await this.json<{ suggestions: SuggestionJson[] }>(
      `/sessions/${sid}/suggestions`,
    );
    return out.suggestions;
  }

  pathSnapshot(sid: string, k: number, t: number): Promise<PathSnapshotJson> {
    return this.json(`/sessions/${sid}/suggestions/${k}/path/${t}`);
  }

  async select(sid: string, k: number, t?: number): Promise<Record<string, unknown>> {
    const resp = await this.post(`/sessions/${sid}/select`, t === undefined ? { k } : { k, t });
    return (await resp.json()) as Record<string, unknown>;
  }

  async lock(sid: string, sizes: LockSize[]): Promise<void> {
    await this.post(`/sessions/${sid}/lock`, { sizes });
  }

  async edit(
    sid: string,
    u: Record<string, number>,
    mode: EditMode,
  ): Promise<Record<string, unknown>> {
    const resp = await this.post(`/sessions/${sid}/edit`, { u, mode });
    return (await resp.json()) as Record<string, unknown>;
  }

  async planSvg(sid: string): Promise<string> {
    const resp = await this.request(`/sessions/${sid}/plan.svg`);
    return resp.text();
  }
}
