import type { CaptionRequest, MetricReport, SessionView } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  private fetchImpl: FetchLike;

  constructor(private baseUrl: string = "", fetchImpl?: FetchLike) {
    // bind so a bare window.fetch keeps its receiver
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const payload = await resp.json();
        if (payload && payload.detail) detail = String(payload.detail);
      } catch {
        // non-JSON error body; keep statusText
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(manifest: string): Promise<SessionView> {
    return this.request("POST", "/sessions", { manifest });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${id}`);
  }

  submitCaption(id: string, req: CaptionRequest, wait = false): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/caption`, { ...req, wait });
  }

  overrideExemplar(id: string, index: number): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/exemplar`, { index });
  }

  propagate(id: string, alpha: number, wait = false): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/propagate`, { alpha, wait });
  }

  getMetrics(id: string, version?: number): Promise<MetricReport> {
    const query = version === undefined ? "" : `?version=${version}`;
    return this.request("GET", `/sessions/${id}/metrics${query}`);
  }

  inputFrameUrl(id: string, index: number): string {
    return `${this.baseUrl}/sessions/${id}/frames/input/${index}`;
  }

  truthFrameUrl(id: string, index: number): string {
    return `${this.baseUrl}/sessions/${id}/frames/truth/${index}`;
  }

  candidateFrameUrl(id: string, index: number): string {
    return `${this.baseUrl}/sessions/${id}/frames/candidate/${index}`;
  }

  resultFrameUrl(id: string, version: number, index: number): string {
    return `${this.baseUrl}/sessions/${id}/frames/result/${version}/${index}`;
  }
}
