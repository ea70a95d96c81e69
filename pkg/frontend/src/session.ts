/** Console session: one user, one forecast at a time, queries queued FIFO.
 *
 * Every probability shown to the user is a verbatim field of a service
 * response; the session never computes probabilities itself. History entries
 * keep the query and the ensemble ids used, so replaying one re-asks the
 * service for the same cached ensembles and must reproduce the same number.
 */

import { ApiClient } from "./api.js";
import { polygonProblem, toRequestPolygon } from "./polygon.js";
import type { ForecastSummary, PatchInfo, Point, QueryResult } from "./types.js";

export interface QuerySpec {
  kind: "area" | "route";
  polygon: Point[];
  threshold: number; // ignored for routes
  horizon: number;
}

export interface HistoryEntry {
  spec: QuerySpec;
  result: QueryResult;
  /** The number the panel displays, exactly as taken from the response. */
  displayed: number;
  label: string;
  at: string;
}

export interface ForecastParams {
  start: string;
  horizon: number;
  scenarios: number;
  seed: number;
}

/** The headline number for a result: what the user asked about. */
export function displayedProbability(result: QueryResult): number {
  return result.kind === "route" ? (result.not_flooded as number) : result.probability_above;
}

export function describeQuery(spec: QuerySpec, result: QueryResult): string {
  if (spec.kind === "route") {
    return `route stays dry over ${spec.horizon}h`;
  }
  return `area exceeds ${spec.threshold} ft within ${spec.horizon}h`;
}

export class ConsoleSession {
  patches: PatchInfo[] = [];
  selectedPatch: string | null = null;
  forecast: ForecastSummary | null = null;
  forecastParams: ForecastParams | null = null;
  history: HistoryEntry[] = [];

  private forecastInFlight: Promise<ForecastSummary> | null = null;
  private queryChain: Promise<unknown> = Promise.resolve();

  constructor(public api: ApiClient) {}

  async loadPatches(): Promise<PatchInfo[]> {
    this.patches = await this.api.patches();
    if (this.patches.length && this.selectedPatch === null) {
      this.selectedPatch = this.patches[0].patch_id;
    }
    return this.patches;
  }

  /** At most one forecast request is in flight; repeats await the same one. */
  requestForecast(params: ForecastParams): Promise<ForecastSummary> {
    if (this.forecastInFlight) return this.forecastInFlight;
    if (!this.selectedPatch) return Promise.reject(new Error("select a patch first"));
    const request = this.api
      .forecast({ patch_id: this.selectedPatch, ...params })
      .then((summary) => {
        this.forecast = summary;
        this.forecastParams = params;
        return summary;
      })
      .finally(() => {
        this.forecastInFlight = null;
      });
    this.forecastInFlight = request;
    return request;
  }

  /** Queue a query; resolution order matches submission order (FIFO). */
  submitQuery(spec: QuerySpec): Promise<HistoryEntry> {
    const run = async (): Promise<HistoryEntry> => {
      const problem = polygonProblem(spec.polygon);
      if (problem) throw new Error(problem);
      if (!this.forecastParams) throw new Error("request a forecast first");
      const body = {
        polygon: toRequestPolygon(spec.polygon),
        horizon: spec.horizon,
        forecast: { ...this.forecastParams, horizon: Math.max(spec.horizon, this.forecastParams.horizon) },
      };
      const result =
        spec.kind === "area"
          ? await this.api.queryArea({ ...body, threshold: spec.threshold })
          : await this.api.queryRoute(body);
      const entry: HistoryEntry = {
        spec,
        result,
        displayed: displayedProbability(result),
        label: describeQuery(spec, result),
        at: new Date().toISOString(),
      };
      this.history.push(entry);
      return entry;
    };
    const queued = this.queryChain.then(run, run);
    this.queryChain = queued.catch(() => undefined);
    return queued;
  }

  /** Re-ask the service using the ensemble ids recorded in the entry. */
  replay(entry: HistoryEntry): Promise<HistoryEntry> {
    const ids = Object.values(entry.result.ensemble_ids);
    const run = async (): Promise<HistoryEntry> => {
      const body = {
        polygon: toRequestPolygon(entry.spec.polygon),
        horizon: entry.spec.horizon,
        ensemble_ids: ids,
      };
      const result =
        entry.spec.kind === "area"
          ? await this.api.queryArea({ ...body, threshold: entry.spec.threshold })
          : await this.api.queryRoute(body);
      const replayed: HistoryEntry = {
        spec: entry.spec,
        result,
        displayed: displayedProbability(result),
        label: describeQuery(entry.spec, result),
        at: new Date().toISOString(),
      };
      this.history.push(replayed);
      return replayed;
    };
    const queued = this.queryChain.then(run, run);
    this.queryChain = queued.catch(() => undefined);
    return queued;
  }
}
