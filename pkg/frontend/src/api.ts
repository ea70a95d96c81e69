/** Thin typed client for the forecast service. */

import type { ForecastSummary, ModelInfo, PatchInfo, Point, QueryResult } from "./types.js";

export class ServiceError extends Error {
  constructor(public status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

async function toError(response: Response): Promise<ServiceError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") detail = body.detail;
    else if (body.detail) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ServiceError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) throw await toError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await toError(response);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; model_loaded: boolean }> {
    return this.get("/health");
  }

  patches(): Promise<PatchInfo[]> {
    return this.get("/patches");
  }

  model(): Promise<ModelInfo> {
    return this.get("/model");
  }

  forecast(req: {
    patch_id: string;
    start: string;
    horizon: number;
    scenarios: number;
    seed: number;
  }): Promise<ForecastSummary> {
    return this.post("/forecast", req);
  }

  queryArea(req: {
    polygon: Point[];
    threshold: number;
    horizon: number;
    ensemble_ids?: string[];
    forecast?: { start: string; horizon: number; scenarios: number; seed: number };
  }): Promise<QueryResult> {
    return this.post("/query/area", req);
  }

  queryRoute(req: {
    polygon: Point[];
    horizon: number;
    ensemble_ids?: string[];
    forecast?: { start: string; horizon: number; scenarios: number; seed: number };
  }): Promise<QueryResult> {
    return this.post("/query/route", req);
  }

  async ensembleText(ensembleId: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/ensemble/${ensembleId}`);
    if (!response.ok) throw await toError(response);
    return response.text();
  }
}
