"""Dataset loading, layout, and chronological splitting.

A dataset directory holds one `<patch_id>.gsf` series and one
`<patch_id>.gse` elevation file per patch, plus an optional `layout.txt`
sidecar mapping patch ids to raster origins (`patch_id row col cell_size_m`
per line). Without the sidecar, patches tile left-to-right in sorted order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from tidecast import gsf
from tidecast.grid import CovariateSeries, ElevationGrid, PatchSeries
from tidecast.synth import SynthConfig, generate_synthetic


@dataclass(frozen=True)
class PatchData:
    series: PatchSeries
    elevation: ElevationGrid
    covariates: CovariateSeries

    def __post_init__(self):
        if self.elevation.grid_size != self.series.grid_size:
            raise ValueError(
                f"patch {self.series.patch_id}: elevation grid {self.elevation.grid_size} "
                f"does not match series grid {self.series.grid_size}"
            )
        if len(self.covariates) != self.series.num_steps:
            raise ValueError(f"patch {self.series.patch_id}: covariate length mismatch")

    @property
    def patch_id(self) -> str:
        return self.series.patch_id


@dataclass(frozen=True)
class FloodDataset:
    patches: tuple[PatchData, ...]

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        sizes = {p.series.grid_size for p in self.patches}
        if len(sizes) > 1:
            raise ValueError(f"mixed patch grid sizes in dataset: {sorted(sizes)}")

    @property
    def grid_size(self) -> int:
        return self.patches[0].series.grid_size

    @property
    def num_steps(self) -> int:
        return min(p.series.num_steps for p in self.patches)

    def patch(self, patch_id: str) -> PatchData:
        for p in self.patches:
            if p.patch_id == patch_id:
                return p
        raise KeyError(f"unknown patch {patch_id!r}")

    def patch_ids(self) -> list[str]:
        return [p.patch_id for p in self.patches]


def read_layout(path: Path) -> dict[str, tuple[int, int, float]]:
    layout = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(
                f"{path}:{lineno}: expected 'patch_id row col [cell_size_m]', got {raw!r}"
            )
        cell = float(parts[3]) if len(parts) == 4 else 30.0
        layout[parts[0]] = (int(parts[1]), int(parts[2]), cell)
    return layout


def write_layout(path: Path, patches: list[PatchSeries]) -> None:
    with open(path, "w") as fh:
        for series in patches:
            r, c = series.origin
            fh.write(f"{series.patch_id} {r} {c} {series.cell_size_m:g}\n")


def load_dataset(directory: str | Path) -> FloodDataset:
    directory = Path(directory)
    series_files = sorted(directory.glob("*.gsf"))
    series_files = [p for p in series_files if not p.name.endswith(".ens.gsf")]
    if not series_files:
        raise FileNotFoundError(f"no .gsf series files in {directory}")
    layout_path = directory / "layout.txt"
    layout = read_layout(layout_path) if layout_path.exists() else {}
    patches = []
    next_col = 0
    for sf in series_files:
        patch_id = sf.stem
        origin, cell = (0, next_col), 30.0
        if patch_id in layout:
            r, c, cell = layout[patch_id]
            origin = (r, c)
        series, cov = gsf.read_series(sf, patch_id=patch_id, origin=origin, cell_size_m=cell)
        next_col += series.grid_size
        ef = directory / f"{patch_id}.gse"
        if not ef.exists():
            raise FileNotFoundError(f"missing elevation file {ef}")
        elevation = gsf.read_elevation(ef, patch_id=patch_id)
        patches.append(PatchData(series, elevation, cov))
    return FloodDataset(tuple(patches))


def save_dataset(directory: str | Path, patches: list[tuple[PatchSeries, ElevationGrid, CovariateSeries]]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for series, elevation, _ in patches:
        gsf.write_series(directory / f"{series.patch_id}.gsf", series)
        gsf.write_elevation(directory / f"{series.patch_id}.gse", elevation)
    write_layout(directory / "layout.txt", [s for s, _, _ in patches])


def synthesize_dataset(cfg: SynthConfig, directory: str | Path | None = None) -> FloodDataset:
    rows = generate_synthetic(cfg)
    if directory is not None:
        save_dataset(directory, rows)
    return FloodDataset(tuple(PatchData(s, e, c) for s, e, c in rows))


def split_chronological(
    data: FloodDataset, train_steps: int, val_steps: int, test_steps: int
) -> tuple[FloodDataset, FloodDataset, FloodDataset]:
    """Contiguous, ordered, non-overlapping train/val/test splits."""
    for name, steps in (("train", train_steps), ("val", val_steps), ("test", test_steps)):
        if steps < 0:
            raise ValueError(f"{name}_steps must be nonnegative")
    need = train_steps + val_steps + test_steps
    have = data.num_steps
    if need > have:
        raise ValueError(f"insufficient timesteps for split: need {need}, have {have}")

    def cut(start: int, stop: int) -> FloodDataset:
        patches = tuple(
            PatchData(
                p.series.slice_steps(start, stop),
                p.elevation,
                p.covariates.slice_steps(start, stop),
            )
            for p in data.patches
        )
        return FloodDataset(patches)

    a, b = train_steps, train_steps + val_steps
    return cut(0, a), cut(a, b), cut(b, b + test_steps)


DEFAULT_SPLIT = (1944, 24, 168)
DESK_SPLIT = (480, 24, 96)


def pick_split(data: FloodDataset, requested: tuple[int, int, int] | None) -> tuple[int, int, int]:
    """Requested split, or the standard/desk-scale default that fits."""
    if requested is not None:
        return requested
    if data.num_steps >= sum(DEFAULT_SPLIT):
        return DEFAULT_SPLIT
    if data.num_steps >= sum(DESK_SPLIT):
        return DESK_SPLIT
    # last resort: 80/10/10-ish proportional split
    t = data.num_steps
    val = max(t // 10, 24) if t >= 240 else t // 10
    test = val * 2
    return (t - val - test, val, test)
