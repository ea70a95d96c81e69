"""tidecast: probabilistic coastal inundation forecasting on gridded patches.

A conditional denoising-diffusion forecaster for hourly D x D inundation
grids, with ensemble sampling, CRPS-family evaluation, flood-probability
queries over polygons, a CLI, and an HTTP service.
"""

__version__ = "0.1.0"

from tidecast.grid import (
    CovariateSeries,
    ElevationGrid,
    NormStats,
    PatchSeries,
    Window,
    destandardize,
    make_windows,
    standardize_window,
)
from tidecast.schedule import NoiseSchedule, forward_sample, make_schedule, posterior_mean_var

__all__ = [
    "CovariateSeries",
    "ElevationGrid",
    "NormStats",
    "NoiseSchedule",
    "PatchSeries",
    "Window",
    "destandardize",
    "forward_sample",
    "make_schedule",
    "make_windows",
    "posterior_mean_var",
    "standardize_window",
]
