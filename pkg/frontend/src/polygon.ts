/** Client-side polygon drawing state and validation.
 *
 * Mirrors the service's rules (at least 3 vertices, simple, nonzero area) so
 * bad polygons are rejected before a request is made. Coordinates are raster
 * cell units: x along columns, y along rows.
 */

import type { Point } from "./types.js";

export function polygonArea(vertices: Point[]): number {
  let total = 0;
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    const [x0, y0] = vertices[i];
    const [x1, y1] = vertices[(i + 1) % n];
    total += x0 * y1 - x1 * y0;
  }
  return total / 2;
}

function orient(a: Point, b: Point, c: Point): number {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

function segmentsCross(p1: Point, p2: Point, p3: Point, p4: Point): boolean {
  const d1 = orient(p3, p4, p1);
  const d2 = orient(p3, p4, p2);
  const d3 = orient(p1, p2, p3);
  const d4 = orient(p1, p2, p4);
  return d1 > 0 !== d2 > 0 && d3 > 0 !== d4 > 0 && [d1, d2, d3, d4].every((d) => d !== 0);
}

export function isSimplePolygon(vertices: Point[]): boolean {
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      if ((j + 1) % n === i || (i + 1) % n === j) continue; // shared vertex
      const a = vertices[i];
      const b = vertices[(i + 1) % n];
      const c = vertices[j];
      const d = vertices[(j + 1) % n];
      if (segmentsCross(a, b, c, d)) return false;
    }
  }
  return true;
}

/** Null when valid; otherwise a user-facing reason. */
export function polygonProblem(vertices: Point[]): string | null {
  if (vertices.length < 3) return "draw at least 3 vertices";
  if (Math.abs(polygonArea(vertices)) <= 1e-9) return "polygon has zero area";
  if (!isSimplePolygon(vertices)) return "polygon must not self-intersect";
  return null;
}

/** Vertex list in the service's request format (lossless round-trip). */
export function toRequestPolygon(vertices: Point[]): Point[] {
  return vertices.map(([x, y]) => [x, y]);
}

/** In-progress drawing: click to add vertices, close to finish. */
export class PolygonDraft {
  vertices: Point[] = [];

  add(x: number, y: number): void {
    this.vertices.push([x, y]);
  }

  undo(): void {
    this.vertices.pop();
  }

  clear(): void {
    this.vertices = [];
  }

  problem(): string | null {
    return polygonProblem(this.vertices);
  }
}
