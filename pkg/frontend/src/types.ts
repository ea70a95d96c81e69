/** Wire types mirroring the forecast service's JSON API. */

export interface PatchInfo {
  patch_id: string;
  origin: [number, number]; // (row, col) in parent-raster cells
  grid_size: number;
  timesteps: number;
  start: string;
  cell_size_m: number;
}

export interface ForecastSummary {
  ensemble_id: string;
  patch_id: string;
  start: string;
  horizon: number;
  scenarios: number;
  seed: number;
  checkpoint_id: string;
  mean: number[][][]; // [lead][row][col] feet
  std: number[][][];
}

export interface QueryResult {
  kind: "area" | "route";
  probability_above: number;
  not_flooded?: number;
  threshold: number;
  horizon: number;
  per_patch_below: Record<string, number>;
  cells_per_patch: Record<string, number>;
  members_per_patch: Record<string, number>;
  ensemble_ids: Record<string, string>;
}

export interface ModelInfo {
  checkpoint_id: string;
  parameter_count: number;
  epoch: number;
  config: Record<string, unknown>;
}

export type Point = [number, number]; // (x, y) in raster cell coordinates
