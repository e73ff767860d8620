import type {
  AgentsPayload,
  ControlAck,
  HistogramPayload,
  ProjectionPayload,
  RecordsPage,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin client over the server's JSON endpoints. Reads are GETs; the only
 * writes the UI ever performs go through the three control POSTs below.
 */
export class Client {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message =
        typeof (body as { error?: unknown }).error === "string"
          ? (body as { error: string }).error
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getRecords(since: number, wait: boolean): Promise<RecordsPage> {
    const query = `since=${since}` + (wait ? "&wait=1" : "");
    return this.request<RecordsPage>(`/api/records?${query}`);
  }

  getAgents(): Promise<AgentsPayload> {
    return this.request<AgentsPayload>("/api/agents");
  }

  getHistogram(agent: string, bins: number): Promise<HistogramPayload> {
    const scope = agent || "all";
    return this.request<HistogramPayload>(
      `/api/histogram?agent=${encodeURIComponent(scope)}&bins=${bins}`,
    );
  }

  getProjection(): Promise<ProjectionPayload> {
    return this.request<ProjectionPayload>("/api/projection");
  }

  pause(agentId: string): Promise<ControlAck> {
    return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/pause`, {});
  }

  resume(agentId: string): Promise<ControlAck> {
    return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/resume`, {});
  }

  params(
    agentId: string,
    values: { temperature?: number; epsilon?: number },
  ): Promise<ControlAck> {
    return this.post(`/api/control/agents/${encodeURIComponent(agentId)}/params`, values);
  }

  seed(userTemplate: string): Promise<ControlAck> {
    return this.post("/api/control/seeds", { user_template: userTemplate });
  }
}
