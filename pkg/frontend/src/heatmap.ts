/** Canvas heatmap rendering: the deeper the water, the darker the blue.
 *
 * All lookups return values verbatim from the forecast summary; no statistics
 * are computed client-side beyond a shared color scale maximum.
 */

import type { ForecastSummary } from "./types.js";

export type Field = "mean" | "std";

/** Dry cells render as sand; wet cells interpolate white-blue -> deep blue. */
export function valueToColor(value: number, vmax: number): [number, number, number, number] {
  if (value <= 0) return [237, 231, 214, 255];
  const t = vmax > 0 ? Math.min(value / vmax, 1) : 1;
  const r = Math.round(198 - 178 * t);
  const g = Math.round(222 - 152 * t);
  const b = Math.round(241 - 95 * t);
  return [r, g, b, 255];
}

/** Maximum over every lead/cell of the chosen field, fixing the color scale. */
export function fieldMax(summary: ForecastSummary, field: Field): number {
  let max = 0;
  for (const frame of summary[field]) {
    for (const row of frame) {
      for (const v of row) {
        if (v > max) max = v;
      }
    }
  }
  return max;
}

/** RGBA buffer (grid-resolution) for one lead time of one field. */
export function renderFrame(summary: ForecastSummary, field: Field, lead: number, vmax: number): Uint8ClampedArray {
  const frame = summary[field][lead];
  const d = frame.length;
  const out = new Uint8ClampedArray(d * d * 4);
  for (let r = 0; r < d; r++) {
    for (let c = 0; c < d; c++) {
      const [red, green, blue, alpha] = valueToColor(frame[r][c], vmax);
      const base = (r * d + c) * 4;
      out[base] = red;
      out[base + 1] = green;
      out[base + 2] = blue;
      out[base + 3] = alpha;
    }
  }
  return out;
}

/** The value shown on hover: the raw JSON number for that cell, untouched. */
export function displayedValueAt(
  summary: ForecastSummary,
  field: Field,
  lead: number,
  row: number,
  col: number,
): number {
  return summary[field][lead][row][col];
}

/** Draw one patch frame onto a canvas context scaled by cellPx. */
export function drawFrame(
  ctx: CanvasRenderingContext2D,
  summary: ForecastSummary,
  field: Field,
  lead: number,
  vmax: number,
  cellPx: number,
): void {
  const frame = summary[field][lead];
  const d = frame.length;
  for (let r = 0; r < d; r++) {
    for (let c = 0; c < d; c++) {
      const [red, green, blue] = valueToColor(frame[r][c], vmax);
      ctx.fillStyle = `rgb(${red},${green},${blue})`;
      ctx.fillRect(c * cellPx, r * cellPx, cellPx, cellPx);
    }
  }
}
