"""Flood-probability queries over forecast ensembles.

Coordinates are raster cell units: x runs along columns, y along rows, and
the cell at (row r, col c) of a patch with origin (R, C) covers the unit
square [C+c, C+c+1] x [R+r, R+r+1]. A query polygon selects every cell whose
square it overlaps with positive area. Per patch, the fraction of ensemble
members that keep every selected cell at or below the threshold over the
horizon gives the patch's "stays below" probability; patches are treated as
independent, so the chance of any exceedance is one minus their product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AREA_EPS = 1e-9


@dataclass(frozen=True)
class PatchLayout:
    patch_id: str
    origin: tuple[int, int]  # (row, col) offset in the parent raster
    grid_size: int


@dataclass(frozen=True)
class QueryPolygon:
    vertices: tuple[tuple[float, float], ...]
    kind: str = "area"  # "area" | "route"

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if self.kind not in ("area", "route"):
            raise ValueError(f"polygon kind must be 'area' or 'route', got {self.kind!r}")
        if len(verts) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(verts)}")
        if abs(polygon_area(verts)) <= AREA_EPS:
            raise ValueError("degenerate polygon: zero area")
        if not is_simple_polygon(verts):
            raise ValueError("polygon must be simple (non-self-intersecting)")


def polygon_area(vertices) -> float:
    """Signed shoelace area."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return total / 2.0


def _segments_cross(p1, p2, p3, p4) -> bool:
    """True when open segments p1p2 and p3p4 properly intersect."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and all(
        abs(d) > 0 for d in (d1, d2, d3, d4)
    )


def is_simple_polygon(vertices) -> bool:
    n = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared-vertex neighbours
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def clip_to_box(vertices, x0: float, y0: float, x1: float, y1: float) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a polygon against an axis-aligned box."""

    def clip_edge(points, inside, intersect):
        out = []
        if not points:
            return out
        prev = points[-1]
        prev_in = inside(prev)
        for cur in points:
            cur_in = inside(cur)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
            prev, prev_in = cur, cur_in
        return out

    def x_cross(p, q, x):
        t = (x - p[0]) / (q[0] - p[0])
        return (x, p[1] + t * (q[1] - p[1]))

    def y_cross(p, q, y):
        t = (y - p[1]) / (q[1] - p[1])
        return (p[0] + t * (q[0] - p[0]), y)

    pts = list(vertices)
    pts = clip_edge(pts, lambda p: p[0] >= x0, lambda p, q: x_cross(p, q, x0))
    pts = clip_edge(pts, lambda p: p[0] <= x1, lambda p, q: x_cross(p, q, x1))
    pts = clip_edge(pts, lambda p: p[1] >= y0, lambda p, q: y_cross(p, q, y0))
    pts = clip_edge(pts, lambda p: p[1] <= y1, lambda p, q: y_cross(p, q, y1))
    return pts


def cell_overlap_area(vertices, x0: float, y0: float) -> float:
    """Area of polygon intersected with the unit cell at (x0, y0)."""
    clipped = clip_to_box(vertices, x0, y0, x0 + 1.0, y0 + 1.0)
    if len(clipped) < 3:
        return 0.0
    return abs(polygon_area(clipped))


def cells_overlapping(
    polygon: QueryPolygon, layout: list[PatchLayout]
) -> dict[str, list[tuple[int, int]]]:
    """Cells of each patch whose unit square overlaps the polygon with area > 0.

    Returns {patch_id: [(row, col), ...]}; patches with no overlap are absent.
    A polygon entirely outside the raster simply selects nothing.
    """
    xs = [v[0] for v in polygon.vertices]
    ys = [v[1] for v in polygon.vertices]
    out: dict[str, list[tuple[int, int]]] = {}
    for patch in layout:
        r0, c0 = patch.origin
        d = patch.grid_size
        col_lo = max(int(np.floor(min(xs))), c0)
        col_hi = min(int(np.ceil(max(xs))), c0 + d)
        row_lo = max(int(np.floor(min(ys))), r0)
        row_hi = min(int(np.ceil(max(ys))), r0 + d)
        if col_lo >= col_hi or row_lo >= row_hi:
            continue
        cells = []
        for row in range(row_lo, row_hi):
            for col in range(col_lo, col_hi):
                if cell_overlap_area(polygon.vertices, float(col), float(row)) > AREA_EPS:
                    cells.append((row - r0, col - c0))
        if cells:
            out[patch.patch_id] = cells
    return out


@dataclass(frozen=True)
class QueryResult:
    kind: str
    probability_above: float
    threshold: float
    horizon: int
    per_patch_below: dict[str, float] = field(default_factory=dict)
    cells_per_patch: dict[str, int] = field(default_factory=dict)
    members_per_patch: dict[str, int] = field(default_factory=dict)

    @property
    def not_flooded(self) -> float:
        return 1.0 - self.probability_above

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "probability_above": self.probability_above,
            "threshold": self.threshold,
            "horizon": self.horizon,
            "per_patch_below": self.per_patch_below,
            "cells_per_patch": self.cells_per_patch,
            "members_per_patch": self.members_per_patch,
        }
        if self.kind == "route":
            out["not_flooded"] = self.not_flooded
        return out


def patch_below_probability(
    members: np.ndarray, cells: list[tuple[int, int]], threshold: float, horizon: int
) -> tuple[float, int]:
    """Fraction of members keeping every listed cell <= threshold for `horizon` steps."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if members.shape[1] < horizon:
        raise ValueError(
            f"ensemble horizon {members.shape[1]} shorter than queried {horizon}"
        )
    rows = [rc[0] for rc in cells]
    cols = [rc[1] for rc in cells]
    selected = members[:, :horizon, rows, cols]  # (M, horizon, n_cells)
    below = np.all(selected <= threshold, axis=(1, 2))
    return float(np.count_nonzero(below)) / members.shape[0], members.shape[0]


def area_flood_probability(
    polygon: QueryPolygon,
    threshold: float,
    horizon: int,
    ensembles: dict[str, np.ndarray],
    layout: list[PatchLayout],
) -> QueryResult:
    """Probability that any overlapped cell exceeds `threshold` within `horizon`."""
    by_patch = cells_overlapping(polygon, layout)
    per_patch: dict[str, float] = {}
    cells_count: dict[str, int] = {}
    members_count: dict[str, int] = {}
    prod = 1.0
    for patch_id, cells in by_patch.items():
        if patch_id not in ensembles:
            raise KeyError(f"no ensemble supplied for patch {patch_id!r} required by the query")
        below, m = patch_below_probability(ensembles[patch_id], cells, threshold, horizon)
        per_patch[patch_id] = below
        cells_count[patch_id] = len(cells)
        members_count[patch_id] = m
        prod *= below
    return QueryResult(
        kind=polygon.kind,
        probability_above=1.0 - prod,
        threshold=threshold,
        horizon=horizon,
        per_patch_below=per_patch,
        cells_per_patch=cells_count,
        members_per_patch=members_count,
    )


def route_flood_probability(
    polygon: QueryPolygon,
    horizon: int,
    ensembles: dict[str, np.ndarray],
    layout: list[PatchLayout],
) -> QueryResult:
    """Route variant: threshold 0; report via `.not_flooded`."""
    route = QueryPolygon(polygon.vertices, kind="route")
    return area_flood_probability(route, 0.0, horizon, ensembles, layout)


def read_polygon_file(path) -> list[tuple[float, float]]:
    """One `x y` vertex pair per line; '#' comments allowed."""
    vertices = []
    for lineno, raw in enumerate(open(path).read().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        vertices.append((float(parts[0]), float(parts[1])))
    return vertices
