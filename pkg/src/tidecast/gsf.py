"""Plain-text grid formats.

Series file (GSF):   line 1 "GSF1 D T", line 2 an ISO-8601 start timestamp,
                     then T blocks of D rows of D decimal feet.
Elevation file (GSE): line 1 "GSE1 D", then D rows of D decimal feet.
Ensemble file (GSFE): manifest lines, then M member sections of L frames.

Values are written with repr-level precision so every float64 round-trips
exactly; covariates are derived from timestamps, never stored.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from tidecast.grid import CovariateSeries, ElevationGrid, NormStats, PatchSeries, hours_range


class FormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def _fmt_row(row: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in row)


def _parse_row(path, lineno: int, line: str, d: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != d:
        raise FormatError(path, lineno, f"expected {d} values, found {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise FormatError(path, lineno, f"non-numeric cell: {exc}") from exc


class _Reader:
    def __init__(self, path):
        self.path = path
        self.lines = Path(path).read_text().splitlines()
        self.pos = 0

    def next_line(self, what: str) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise FormatError(self.path, len(self.lines), f"truncated file: expected {what}")

    @property
    def lineno(self) -> int:
        return self.pos


def write_series(path: str | Path, series: PatchSeries) -> None:
    d, t = series.grid_size, series.num_steps
    with open(path, "w") as fh:
        fh.write(f"GSF1 {d} {t}\n")
        fh.write(f"{np.datetime_as_string(series.timestamps[0], unit='s')}\n")
        for frame in series.values:
            for row in frame:
                fh.write(_fmt_row(row) + "\n")


def read_series(path: str | Path, patch_id: str | None = None,
                origin: tuple[int, int] = (0, 0),
                cell_size_m: float = 30.0) -> tuple[PatchSeries, CovariateSeries]:
    rd = _Reader(path)
    header = rd.next_line("GSF1 header").split()
    if len(header) != 3 or header[0] != "GSF1":
        raise FormatError(path, rd.lineno, f"bad series header {header!r} (want 'GSF1 D T')")
    try:
        d, t = int(header[1]), int(header[2])
    except ValueError as exc:
        raise FormatError(path, rd.lineno, f"non-integer header field: {exc}") from exc
    if d < 1 or t < 1:
        raise FormatError(path, rd.lineno, f"invalid dimensions D={d}, T={t}")
    start_line = rd.next_line("start timestamp")
    try:
        start = np.datetime64(start_line, "s")
    except ValueError as exc:
        raise FormatError(path, rd.lineno, f"bad ISO-8601 timestamp {start_line!r}") from exc
    values = np.empty((t, d, d))
    for step in range(t):
        for r in range(d):
            try:
                line = rd.next_line(f"frame {step} row {r}")
            except FormatError:
                raise FormatError(
                    path, rd.lineno, f"truncated series: header declares {t} frames, frame {step} is incomplete"
                ) from None
            values[step, r] = _parse_row(path, rd.lineno, line, d)
    if patch_id is None:
        patch_id = Path(path).stem
    timestamps = hours_range(start, t)
    series = PatchSeries(patch_id, values, timestamps, origin=origin, cell_size_m=cell_size_m)
    return series, CovariateSeries.from_timestamps(timestamps)


def write_elevation(path: str | Path, elev: ElevationGrid) -> None:
    with open(path, "w") as fh:
        fh.write(f"GSE1 {elev.grid_size}\n")
        for row in elev.values:
            fh.write(_fmt_row(row) + "\n")


def read_elevation(path: str | Path, patch_id: str | None = None) -> ElevationGrid:
    rd = _Reader(path)
    header = rd.next_line("GSE1 header").split()
    if len(header) != 2 or header[0] != "GSE1":
        raise FormatError(path, rd.lineno, f"bad elevation header {header!r} (want 'GSE1 D')")
    try:
        d = int(header[1])
    except ValueError as exc:
        raise FormatError(path, rd.lineno, f"non-integer grid size: {exc}") from exc
    values = np.empty((d, d))
    for r in range(d):
        values[r] = _parse_row(path, rd.lineno + 1, rd.next_line(f"row {r}"), d)
    return ElevationGrid(patch_id or Path(path).stem, values)


def ensemble_to_text(ens) -> str:
    """Serialize a ForecastEnsemble as a manifest plus M frame blocks."""
    m, horizon, d, _ = ens.members.shape
    seed = ens.seed if isinstance(ens.seed, int) else ",".join(str(s) for s in ens.seed)
    lines = [
        f"GSFE1 {m} {horizon} {d}",
        f"patch {ens.patch_id}",
        f"start {np.datetime_as_string(np.datetime64(ens.start, 's'), unit='s')}",
        f"seed {seed}",
        f"checkpoint {ens.checkpoint_id}",
        f"norm_mean {ens.norm_stats.mean:.17g}",
        f"norm_std {ens.norm_stats.std:.17g}",
    ]
    for idx in range(m):
        lines.append(f"member {idx}")
        for frame in ens.members[idx]:
            for row in frame:
                lines.append(_fmt_row(row))
    return "\n".join(lines) + "\n"


def write_ensemble(path: str | Path, ens) -> None:
    Path(path).write_text(ensemble_to_text(ens))


def read_ensemble(path: str | Path):
    from tidecast.sampling import ForecastEnsemble

    rd = _Reader(path)
    header = rd.next_line("GSFE1 header").split()
    if len(header) != 4 or header[0] != "GSFE1":
        raise FormatError(path, rd.lineno, f"bad ensemble header {header!r} (want 'GSFE1 M L D')")
    m, horizon, d = (int(x) for x in header[1:])
    meta = {}
    for _ in range(6):
        key, _, value = rd.next_line("manifest line").partition(" ")
        meta[key] = value
    for want in ("patch", "start", "seed", "checkpoint", "norm_mean", "norm_std"):
        if want not in meta:
            raise FormatError(path, rd.lineno, f"manifest missing {want!r}")
    members = np.empty((m, horizon, d, d))
    for idx in range(m):
        tag = rd.next_line(f"member {idx} marker")
        if tag != f"member {idx}":
            raise FormatError(path, rd.lineno, f"expected 'member {idx}', got {tag!r}")
        for step in range(horizon):
            for r in range(d):
                members[idx, step, r] = _parse_row(
                    path, rd.lineno + 1, rd.next_line("member row"), d
                )
    seed_text = meta["seed"]
    seed = [int(s) for s in seed_text.split(",")] if "," in seed_text else int(seed_text)
    return ForecastEnsemble(
        patch_id=meta["patch"],
        start=np.datetime64(meta["start"], "s"),
        members=members,
        norm_stats=NormStats(float(meta["norm_mean"]), float(meta["norm_std"])),
        seed=seed,
        checkpoint_id=meta["checkpoint"],
    )
