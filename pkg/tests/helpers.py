"""Independent oracles used across the test suite.

These deliberately avoid the library's own code paths: CRPS by direct
integration of the squared CDF difference, gradients by central finite
differences, query probabilities by brute-force enumeration, and cell
overlap by dense point-in-polygon sampling.
"""

from __future__ import annotations

import numpy as np


def crps_by_integration(samples, observation: float) -> float:
    """Integrate (F_hat(z) - 1[obs <= z])^2 dz over the breakpoint partition.

    Both CDFs are step functions, so the integrand is piecewise constant on
    the partition induced by the sorted sample values and the observation;
    summing value * width per interval is exact quadrature.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    y = float(observation)
    knots = np.unique(np.concatenate([x, [y]]))
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        z = 0.5 * (lo + hi)  # any interior point: integrand constant here
        fhat = np.count_nonzero(x <= z) / x.size
        step = 1.0 if y <= z else 0.0
        total += (fhat - step) ** 2 * (hi - lo)
    return total


def central_difference(f, params: list[np.ndarray], picks, h: float = 1e-3):
    """Central finite differences of scalar f() at selected parameter entries.

    picks: list of (array_index, flat_index). Returns the FD estimates.
    """
    out = []
    for ai, fi in picks:
        flat = params[ai].reshape(-1)
        orig = flat[fi]
        flat[fi] = orig + h
        fp = f()
        flat[fi] = orig - h
        fm = f()
        flat[fi] = orig
        out.append((fp - fm) / (2.0 * h))
    return out


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def brute_force_area_probability(ensembles: dict[str, np.ndarray],
                                 cells: dict[str, list[tuple[int, int]]],
                                 threshold: float, horizon: int) -> float:
    """Enumerate every member combination across patches; exact for small M.

    Probability that at least one queried cell exceeds the threshold within
    the horizon, assuming independent patches.
    """
    patch_ids = sorted(cells)
    exceed_flags = []
    for pid in patch_ids:
        members = ensembles[pid]
        rows = [rc[0] for rc in cells[pid]]
        cols = [rc[1] for rc in cells[pid]]
        flags = [
            bool(np.any(members[m][:horizon, rows, cols] > threshold))
            for m in range(members.shape[0])
        ]
        exceed_flags.append(flags)
    total = 0
    count = 0
    import itertools

    for combo in itertools.product(*[range(len(f)) for f in exceed_flags]):
        count += 1
        if any(exceed_flags[i][m] for i, m in enumerate(combo)):
            total += 1
    return total / count


def cells_by_dense_sampling(vertices, layout, resolution: int = 10):
    """Approximate cell overlap via point-in-polygon tests on a sub-grid.

    Samples resolution^2 interior points per cell; a cell is selected when
    any sample point falls strictly inside the polygon.
    """

    def point_in_polygon(px, py):
        inside = False
        n = len(vertices)
        for i in range(n):
            x0, y0 = vertices[i]
            x1, y1 = vertices[(i + 1) % n]
            if (y0 > py) != (y1 > py):
                xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
                if px < xc:
                    inside = not inside
        return inside

    offsets = (np.arange(resolution) + 0.5) / resolution
    out = {}
    for patch in layout:
        r0, c0 = patch.origin
        cells = []
        for row in range(patch.grid_size):
            for col in range(patch.grid_size):
                hit = False
                for oy in offsets:
                    for ox in offsets:
                        if point_in_polygon(c0 + col + ox, r0 + row + oy):
                            hit = True
                            break
                    if hit:
                        break
                if hit:
                    cells.append((row, col))
        if cells:
            out[patch.patch_id] = cells
    return out
