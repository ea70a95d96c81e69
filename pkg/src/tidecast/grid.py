"""Patch-centric data model: grid series, windows, and per-window scaling.

A *patch* is a D x D square tile of a larger raster. Inundation is stored
time-major as (T, D, D) arrays of feet; elevation is a static (D, D) grid.
Forecast samples are drawn in a standardized space where each training or
evaluation window is scaled by the mean/std of its own context frames.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

HOUR = np.timedelta64(1, "h")

# Floor for the context standard deviation: a constant (fully dry) context
# window would otherwise divide by zero.
STD_FLOOR = 1e-6


def hours_range(start: np.datetime64, count: int) -> np.ndarray:
    """`count` hourly timestamps beginning at `start`."""
    start = np.datetime64(start, "s")
    return start + np.arange(count) * HOUR


def hour_of_day(timestamps: np.ndarray) -> np.ndarray:
    """Hour 0-23 for each timestamp."""
    days = timestamps.astype("datetime64[D]")
    return (timestamps.astype("datetime64[h]") - days.astype("datetime64[h]")).astype(int)


def day_of_month(timestamps: np.ndarray) -> np.ndarray:
    """Day 1-31 for each timestamp."""
    days = timestamps.astype("datetime64[D]")
    months = days.astype("datetime64[M]")
    return (days - months.astype("datetime64[D]")).astype(int) + 1


@dataclass(frozen=True)
class PatchSeries:
    """Hourly inundation history of one patch.

    values has shape (T, D, D) in feet; timestamps are T hourly instants.
    origin locates the patch's top-left cell (row, col) in the parent raster.
    """

    patch_id: str
    values: np.ndarray
    timestamps: np.ndarray
    origin: tuple[int, int] = (0, 0)
    cell_size_m: float = 30.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        object.__setattr__(self, "timestamps", timestamps)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError(f"patch values must be (T, D, D), got {values.shape}")
        if values.shape[0] < 1:
            raise ValueError("patch series needs at least one timestep")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"patch {self.patch_id}: non-finite inundation values")
        if timestamps.shape != (values.shape[0],):
            raise ValueError(
                f"patch {self.patch_id}: {len(timestamps)} timestamps for {values.shape[0]} frames"
            )
        if len(timestamps) > 1 and not np.all(np.diff(timestamps) == HOUR):
            raise ValueError(f"patch {self.patch_id}: timestamps must increase by exactly one hour")

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def grid_size(self) -> int:
        return self.values.shape[1]

    def slice_steps(self, start: int, stop: int) -> "PatchSeries":
        """Contiguous sub-series covering timesteps [start, stop)."""
        return replace(self, values=self.values[start:stop], timestamps=self.timestamps[start:stop])


@dataclass(frozen=True)
class ElevationGrid:
    """Static D x D terrain elevation of one patch, in feet."""

    patch_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"elevation must be (D, D), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"elevation {self.patch_id}: non-finite values")

    @property
    def grid_size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CovariateSeries:
    """Per-timestep temporal covariates: hour of day and day of month."""

    timestamps: np.ndarray
    hour_of_day: np.ndarray
    day_of_month: np.ndarray

    def __post_init__(self):
        timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "hour_of_day", np.asarray(self.hour_of_day, dtype=np.int64))
        object.__setattr__(self, "day_of_month", np.asarray(self.day_of_month, dtype=np.int64))
        n = len(timestamps)
        if len(self.hour_of_day) != n or len(self.day_of_month) != n:
            raise ValueError("covariate fields must match timestamp count")
        if not np.array_equal(self.hour_of_day, hour_of_day(timestamps)):
            raise ValueError("hour_of_day inconsistent with timestamps")
        if not np.array_equal(self.day_of_month, day_of_month(timestamps)):
            raise ValueError("day_of_month inconsistent with timestamps")

    @classmethod
    def from_timestamps(cls, timestamps: np.ndarray) -> "CovariateSeries":
        timestamps = np.asarray(timestamps, dtype="datetime64[s]")
        return cls(timestamps, hour_of_day(timestamps), day_of_month(timestamps))

    def __len__(self) -> int:
        return len(self.timestamps)

    def slice_steps(self, start: int, stop: int) -> "CovariateSeries":
        return CovariateSeries(
            self.timestamps[start:stop],
            self.hour_of_day[start:stop],
            self.day_of_month[start:stop],
        )


@dataclass(frozen=True)
class NormStats:
    """Mean/std of a window's context frames, retained for inversion."""

    mean: float
    std: float


@dataclass(frozen=True)
class Window:
    """One context-plus-target slice of a patch series.

    context is (c, D, D) and target (L, D, D); the target starts exactly one
    hour after the last context frame. norm_stats is None for raw windows and
    set by standardize_window.
    """

    patch_id: str
    context: np.ndarray
    target: np.ndarray
    context_covariates: CovariateSeries
    target_covariates: CovariateSeries
    norm_stats: NormStats | None = None

    def __post_init__(self):
        object.__setattr__(self, "context", np.asarray(self.context, dtype=np.float64))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        if self.context.ndim != 3 or self.target.ndim != 3:
            raise ValueError("context and target must be (len, D, D) frame blocks")
        if self.context.shape[1:] != self.target.shape[1:]:
            raise ValueError("context and target grids differ")
        if len(self.context_covariates) != self.context.shape[0]:
            raise ValueError("context covariates must match context length")
        if len(self.target_covariates) != self.target.shape[0]:
            raise ValueError("target covariates must match target length")
        gap = self.target_covariates.timestamps[0] - self.context_covariates.timestamps[-1]
        if gap != HOUR:
            raise ValueError("target must start exactly one hour after the context")

    @property
    def context_length(self) -> int:
        return self.context.shape[0]

    @property
    def target_length(self) -> int:
        return self.target.shape[0]

    @property
    def grid_size(self) -> int:
        return self.context.shape[1]


def make_windows(
    series: PatchSeries,
    cov: CovariateSeries,
    c: int,
    L: int,
    stride: int = 1,
) -> list[Window]:
    """Slice a series into windows of c context frames plus L target frames.

    Returns floor((T - c - L) / stride) + 1 windows; frames and covariates are
    verbatim slices of the inputs.
    """
    if c < 1 or L < 1:
        raise ValueError("context and target lengths must be positive")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(cov) != series.num_steps:
        raise ValueError("covariate series length must match the patch series")
    need = c + L
    have = series.num_steps
    if have < need:
        raise ValueError(f"insufficient timesteps: need {need}, have {have}")
    windows = []
    for start in range(0, have - need + 1, stride):
        split = start + c
        end = split + L
        windows.append(
            Window(
                patch_id=series.patch_id,
                context=series.values[start:split],
                target=series.values[split:end],
                context_covariates=cov.slice_steps(start, split),
                target_covariates=cov.slice_steps(split, end),
            )
        )
    return windows


def context_stats(context: np.ndarray) -> NormStats:
    """Mean and population (1/n) std of a context block, std floored."""
    mean = float(np.mean(context))
    std = float(np.std(context))
    return NormStats(mean=mean, std=max(std, STD_FLOOR))


def standardize_window(w: Window) -> Window:
    """Scale both context and target by the context frames' mean/std."""
    stats = context_stats(w.context)
    return replace(
        w,
        context=(w.context - stats.mean) / stats.std,
        target=(w.target - stats.mean) / stats.std,
        norm_stats=stats,
    )


def destandardize(
    frames: np.ndarray,
    stats: NormStats,
    clamp_physical: bool = False,
) -> np.ndarray:
    """Invert standardization back to feet; optionally clamp at 0."""
    out = np.asarray(frames, dtype=np.float64) * stats.std + stats.mean
    if clamp_physical:
        out = np.maximum(out, 0.0)
    return out


def build_patch_series(
    patch_id: str,
    values: np.ndarray,
    start: np.datetime64,
    origin: tuple[int, int] = (0, 0),
    cell_size_m: float = 30.0,
) -> tuple[PatchSeries, CovariateSeries]:
    """Convenience constructor deriving timestamps and covariates from a start time."""
    values = np.asarray(values, dtype=np.float64)
    timestamps = hours_range(start, values.shape[0])
    series = PatchSeries(patch_id, values, timestamps, origin=origin, cell_size_m=cell_size_m)
    return series, CovariateSeries.from_timestamps(timestamps)


def stack_covariates(cov: CovariateSeries) -> np.ndarray:
    """(len, 2) int array of (hour_of_day, day_of_month) rows."""
    return np.stack([cov.hour_of_day, cov.day_of_month], axis=1)


def concat_windows(windows: Sequence[Window]) -> np.ndarray:
    """Stack window contexts into a (B, c, D, D) batch."""
    return np.stack([w.context for w in windows])
