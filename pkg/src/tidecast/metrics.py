"""Forecast quality metrics: NRMSE, empirical-CDF CRPS, and NACRPS.

All metrics are computed on physical (feet) values. CRPS uses the energy
closed form, which equals the integral of the squared difference between the
ensemble's step CDF and the observation's step function:

    CRPS = (1/M) sum_m |x_m - y| - (1/(2 M^2)) sum_{m,m'} |x_m - x_{m'}|
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def nrmse(observations: np.ndarray, forecast_mean: np.ndarray) -> float:
    """RMSE of the ensemble mean, normalized by the observation range."""
    obs = np.asarray(observations, dtype=np.float64)
    pred = np.asarray(forecast_mean, dtype=np.float64)
    if obs.shape != pred.shape:
        raise ValueError(f"shape mismatch: observations {obs.shape} vs forecast {pred.shape}")
    lo, hi = float(obs.min()), float(obs.max())
    if hi == lo:
        raise ValueError(f"degenerate range: observations are constant ({lo})")
    rmse = float(np.sqrt(np.mean((obs - pred) ** 2)))
    return rmse / (hi - lo)


def crps_empirical(samples: np.ndarray, observation: float) -> float:
    """CRPS of a 1-D ensemble against a scalar observation (energy form)."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < 1:
        raise ValueError("need at least one sample")
    y = float(observation)
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ValueError("CRPS inputs must be finite")
    term_obs = np.mean(np.abs(x - y))
    term_pair = np.mean(np.abs(x[:, None] - x[None, :])) / 2.0
    return float(term_obs - term_pair)


def crps_grid(members: np.ndarray, observations: np.ndarray) -> np.ndarray:
    """Cellwise CRPS: members (M, ...) against observations (...)."""
    x = np.asarray(members, dtype=np.float64)
    obs = np.asarray(observations, dtype=np.float64)
    if x.shape[1:] != obs.shape:
        raise ValueError(f"members {x.shape} do not stack over observations {obs.shape}")
    m = x.shape[0]
    term_obs = np.abs(x - obs[None]).mean(axis=0)
    term_pair = np.abs(x[:, None] - x[None, :]).sum(axis=(0, 1)) / (2.0 * m * m)
    return term_obs - term_pair


def nacrps(members: np.ndarray, observations: np.ndarray) -> float:
    """Sum of cellwise CRPS normalized by the sum of |observations|."""
    obs = np.asarray(observations, dtype=np.float64)
    denom = float(np.abs(obs).sum())
    if denom == 0.0:
        raise ValueError("all-zero observations: NACRPS is undefined")
    return float(crps_grid(members, obs).sum()) / denom


def persistence_baseline(context: np.ndarray, horizon: int) -> np.ndarray:
    """Flat forecast repeating the last context frame `horizon` times."""
    context = np.asarray(context, dtype=np.float64)
    if context.ndim < 1 or context.shape[0] < 1:
        raise ValueError("context must hold at least one frame")
    return np.repeat(context[-1][None], horizon, axis=0)


def climatology_ensemble(context: np.ndarray, horizon: int) -> np.ndarray:
    """Ensemble whose members are the context frames, constant over time.

    Returns (c, horizon, D, D): member m repeats context frame m.
    """
    context = np.asarray(context, dtype=np.float64)
    return np.repeat(context[:, None], horizon, axis=1)


@dataclass
class EvalReport:
    """Aggregate scores over an evaluation split, physical feet."""

    nrmse: float
    nacrps: float
    per_timestep_nrmse: list[float] = field(default_factory=list)
    per_timestep_nacrps: list[float] = field(default_factory=list)
    num_cells: int = 0
    num_timesteps: int = 0
    num_windows: int = 0
    scenarios: int = 0
    units: str = "feet"

    def to_json_dict(self) -> dict:
        return {
            "nrmse": self.nrmse,
            "nacrps": self.nacrps,
            "per_timestep_nrmse": self.per_timestep_nrmse,
            "per_timestep_nacrps": self.per_timestep_nacrps,
            "num_cells": self.num_cells,
            "num_timesteps": self.num_timesteps,
            "num_windows": self.num_windows,
            "scenarios": self.scenarios,
            "units": self.units,
        }


def score_forecasts(ensembles: list[np.ndarray], observations: list[np.ndarray],
                    scenarios: int) -> EvalReport:
    """Aggregate NRMSE/NACRPS over windows; range taken over the whole split.

    ensembles[i] is (M, L, D, D) and observations[i] is (L, D, D).
    """
    if not ensembles:
        raise ValueError("nothing to score")
    horizon = observations[0].shape[0]
    obs_all = np.concatenate([o.reshape(-1) for o in observations])
    mean_all = np.concatenate([e.mean(axis=0).reshape(-1) for e in ensembles])
    lo, hi = float(obs_all.min()), float(obs_all.max())
    if hi == lo:
        raise ValueError(f"degenerate range: observations are constant ({lo})")

    crps_sum = 0.0
    abs_sum = float(np.abs(obs_all).sum())
    per_step_sq = np.zeros(horizon)
    per_step_count = np.zeros(horizon)
    per_step_crps = np.zeros(horizon)
    per_step_abs = np.zeros(horizon)
    for ens, obs in zip(ensembles, observations):
        cell_crps = crps_grid(ens, obs)
        crps_sum += float(cell_crps.sum())
        per_step_crps += cell_crps.reshape(horizon, -1).sum(axis=1)
        per_step_abs += np.abs(obs).reshape(horizon, -1).sum(axis=1)
        sq = (obs - ens.mean(axis=0)) ** 2
        per_step_sq += sq.reshape(horizon, -1).sum(axis=1)
        per_step_count += sq.reshape(horizon, -1).shape[1]
    if abs_sum == 0.0:
        raise ValueError("all-zero observations: NACRPS is undefined")
    rng_width = hi - lo
    per_step_nrmse = list(np.sqrt(per_step_sq / per_step_count) / rng_width)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_step_nacrps = list(np.where(per_step_abs > 0, per_step_crps / per_step_abs, np.nan))
    return EvalReport(
        nrmse=float(np.sqrt(np.mean((obs_all - mean_all) ** 2))) / rng_width,
        nacrps=crps_sum / abs_sum,
        per_timestep_nrmse=[float(v) for v in per_step_nrmse],
        per_timestep_nacrps=[float(v) for v in per_step_nacrps],
        num_cells=int(observations[0].shape[1] * observations[0].shape[2]),
        num_timesteps=horizon,
        num_windows=len(ensembles),
        scenarios=scenarios,
    )
