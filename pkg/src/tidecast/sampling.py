"""Reverse-process sampling and the autoregressive multi-scenario rollout.

One forecast step runs the reverse chain from pure noise down to a clean
frame, conditioning every denoiser call on the context embedding. A rollout
repeats that L times, feeding each sampled frame back into a sliding context
window (oldest frame dropped) and advancing the covariates by one hour.
Scenario randomness comes from streams keyed on (seed, scenario, step), so
results do not depend on execution order or batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tidecast.encoder import encode_covariates, uses_covariates
from tidecast.grid import HOUR, STD_FLOOR, CovariateSeries, NormStats, Window, destandardize
from tidecast.model import Forecaster
from tidecast.nn.autograd import Tensor
from tidecast.schedule import posterior_mean_var


@dataclass(frozen=True)
class ForecastEnsemble:
    """M sampled trajectories in physical feet, clamped at zero."""

    patch_id: str
    start: np.datetime64
    members: np.ndarray  # (M, L, D, D)
    norm_stats: NormStats
    seed: int | list[int]
    checkpoint_id: str = "-"

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.float64)
        object.__setattr__(self, "members", members)
        if members.ndim != 4:
            raise ValueError(f"members must be (M, L, D, D), got {members.shape}")
        if members.shape[0] < 1:
            raise ValueError("ensemble needs at least one member")
        if not np.all(np.isfinite(members)):
            raise ValueError("ensemble contains non-finite values")
        if np.any(members < 0):
            raise ValueError("ensemble values must be clamped at zero")

    @property
    def num_members(self) -> int:
        return self.members.shape[0]

    @property
    def horizon(self) -> int:
        return self.members.shape[1]

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    def std(self) -> np.ndarray:
        return self.members.std(axis=0)


def _scenario_rngs(seed, scenarios: list[int], step: int) -> list[np.random.Generator]:
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return [np.random.default_rng(base + [m, step]) for m in scenarios]


def sample_next(
    model: Forecaster,
    tokens: Tensor,
    rng: np.random.Generator | list[np.random.Generator],
    batch: int = 1,
) -> np.ndarray:
    """Draw one standardized next-step frame per batch row via the reverse chain.

    `rng` may be a single generator or one per batch row (independent scenario
    streams). Raises on non-finite intermediates, naming the noise step.
    """
    sched = model.schedule
    d = model.config.grid_size
    rngs = rng if isinstance(rng, list) else [rng] * batch
    if len(rngs) != batch:
        raise ValueError(f"need {batch} rng streams, got {len(rngs)}")
    if isinstance(rng, list):
        x = np.stack([r.standard_normal((1, d, d)) for r in rngs])
    else:
        x = rng.standard_normal((batch, 1, d, d))
    for n in range(sched.num_steps, 0, -1):
        x0hat = model.predict_x0(x, n, tokens).data
        mean, var = posterior_mean_var(x, x0hat, n, sched)
        if n > 1:
            if isinstance(rng, list):
                v = np.stack([r.standard_normal((1, d, d)) for r in rngs])
            else:
                v = rng.standard_normal((batch, 1, d, d))
            x = mean + np.sqrt(var) * v
        else:
            x = mean
        if not np.all(np.isfinite(x)):
            bad = np.nonzero(~np.isfinite(x.reshape(batch, -1)).all(axis=1))[0]
            raise RuntimeError(
                f"non-finite sample at noise step {n} (batch rows {bad.tolist()})"
            )
    return x[:, 0]


def advance_covariates(cov: CovariateSeries, steps: int = 1) -> CovariateSeries:
    """Slide a covariate window forward by `steps` hours."""
    last = cov.timestamps[-1]
    new_times = np.concatenate(
        [cov.timestamps[steps:], last + HOUR * np.arange(1, steps + 1)]
    )
    return CovariateSeries.from_timestamps(new_times)


def standardize_context_batch(contexts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row standardization of an (M, c, D, D) physical context batch.

    Uses the same convention as window standardization: population std with
    the small-variance floor.
    """
    m = contexts.shape[0]
    means = contexts.reshape(m, -1).mean(axis=1)
    stds = np.maximum(contexts.reshape(m, -1).std(axis=1), STD_FLOOR)
    normalized = (contexts - means[:, None, None, None]) / stds[:, None, None, None]
    return normalized, means, stds


def rollout(
    model: Forecaster,
    window: Window,
    elevation: np.ndarray | None,
    horizon: int,
    num_scenarios: int,
    seed,
    checkpoint_id: str = "-",
) -> ForecastEnsemble:
    """Sample `num_scenarios` autoregressive trajectories of length `horizon`.

    The window must be standardized (norm_stats set); elevation, when the
    model uses it, must already be standardized. Scenario m's noise at
    forecast step s comes from the stream keyed (seed, m, s).

    The sliding context is kept in physical units and re-standardized by its
    own mean/std before every step, exactly as training windows are; this
    keeps the encoder's inputs on the training distribution even after the
    window has slid onto self-generated frames. Feedback frames stay
    unclamped; clamping happens once at ensemble assembly.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if num_scenarios < 1:
        raise ValueError("need at least one scenario")
    if window.norm_stats is None:
        raise ValueError("rollout requires a standardized window")
    c = window.context_length
    if c != model.config.context_length:
        raise ValueError(
            f"context length {c} does not match model ({model.config.context_length})"
        )
    scenarios = list(range(num_scenarios))
    physical = destandardize(window.context, window.norm_stats)
    contexts = np.repeat(physical[None], num_scenarios, axis=0)  # (M, c, D, D)
    cov = window.context_covariates
    needs_cov = uses_covariates(model.config.ablation)
    frames = []
    for step in range(horizon):
        if step == 0:
            # the window is already standardized by exactly these stats
            normalized = np.repeat(window.context[None], num_scenarios, axis=0)
            means = np.full(num_scenarios, window.norm_stats.mean)
            stds = np.full(num_scenarios, window.norm_stats.std)
        else:
            normalized, means, stds = standardize_context_batch(contexts)
        cov_feat = None
        if needs_cov:
            feat = encode_covariates(cov)
            cov_feat = np.repeat(feat[None], num_scenarios, axis=0)
        try:
            tokens = model.embed_context(normalized, elevation, cov_feat)
            rngs = _scenario_rngs(seed, scenarios, step)
            sample = sample_next(model, tokens, rngs, batch=num_scenarios)
        except RuntimeError as exc:
            # batch rows are scenario indices here
            raise RuntimeError(f"rollout failed at forecast step {step}: {exc}") from exc
        sample_physical = sample * stds[:, None, None] + means[:, None, None]
        frames.append(sample_physical)
        contexts = np.concatenate([contexts[:, 1:], sample_physical[:, None]], axis=1)
        cov = advance_covariates(cov)
    members = np.maximum(np.stack(frames, axis=1), 0.0)  # (M, L, D, D)
    start = window.context_covariates.timestamps[-1] + HOUR
    return ForecastEnsemble(
        patch_id=window.patch_id,
        start=start,
        members=members,
        norm_stats=window.norm_stats,
        seed=seed,
        checkpoint_id=checkpoint_id,
    )
