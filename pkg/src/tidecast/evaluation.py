"""Test-split evaluation: ensemble rollouts scored against held-out frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tidecast.dataset import FloodDataset
from tidecast.encoder import standardize_elevation
from tidecast.grid import Window, make_windows, standardize_window
from tidecast.metrics import (
    EvalReport,
    climatology_ensemble,
    persistence_baseline,
    score_forecasts,
)
from tidecast.model import Forecaster
from tidecast.sampling import rollout
from tidecast.training import uses_elevation_needed


@dataclass
class EvalOutputs:
    report: EvalReport
    persistence: EvalReport
    climatology: EvalReport
    windows: list[Window]
    ensembles: list[np.ndarray]


def evaluation_windows(data: FloodDataset, context_length: int, horizon: int,
                       stride: int | None = None) -> list[Window]:
    """Non-overlapping evaluation windows by default (stride = horizon)."""
    stride = horizon if stride is None else stride
    windows: list[Window] = []
    for patch in data.patches:
        windows.extend(
            make_windows(patch.series, patch.covariates, context_length, horizon, stride)
        )
    return windows


def evaluate_model(
    model: Forecaster,
    data: FloodDataset,
    scenarios: int = 8,
    horizon: int = 12,
    seed: int = 0,
    stride: int | None = None,
) -> EvalOutputs:
    """Roll the model over every evaluation window and score the ensembles.

    Also scores the persistence baseline (repeat the last context frame) and a
    climatology ensemble (context frames as members) on the same windows.
    """
    windows = evaluation_windows(data, model.config.context_length, horizon, stride)
    if not windows:
        raise ValueError("no evaluation windows: dataset too short")
    elevs = None
    if uses_elevation_needed(model):
        elevs = {p.patch_id: standardize_elevation(p.elevation) for p in data.patches}
    ensembles: list[np.ndarray] = []
    observations: list[np.ndarray] = []
    persistence: list[np.ndarray] = []
    climatology: list[np.ndarray] = []
    for index, window in enumerate(windows):
        std = standardize_window(window)
        elev = elevs[window.patch_id] if elevs is not None else None
        ens = rollout(
            model, std, elev, horizon=horizon, num_scenarios=scenarios,
            seed=[seed, index],
        )
        ensembles.append(ens.members)
        observations.append(window.target)
        persistence.append(persistence_baseline(window.context, horizon)[None])
        climatology.append(climatology_ensemble(window.context, horizon))
    report = score_forecasts(ensembles, observations, scenarios)
    persistence_report = score_forecasts(persistence, observations, 1)
    climatology_report = score_forecasts(climatology, observations, windows[0].context_length)
    return EvalOutputs(report, persistence_report, climatology_report, windows, ensembles)
