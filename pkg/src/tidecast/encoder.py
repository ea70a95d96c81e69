"""Context embedding: per-frame spatial features fused with cyclic covariates.

Each of the c context frames (optionally stacked with the patch elevation as
a second channel) runs through a small convolution stack and is pooled to a
fixed-length vector; the hour-of-day / day-of-month sinusoid features are
concatenated and a single affine layer maps every timestep to one embedding
token. Four wirings are supported, selected by `ablation`:

    inun        frames only
    inun_elev   frames + elevation channel
    inun_cov    frames + covariate features
    all         frames + elevation + covariates
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tidecast.grid import CovariateSeries, ElevationGrid, STD_FLOOR
from tidecast.nn.autograd import Tensor, adaptive_avg_pool, avg_pool2, concat
from tidecast.nn.layers import Conv2d, Linear, Module

ABLATIONS = ("inun", "inun_elev", "inun_cov", "all")

COVARIATE_DIM = 4  # sin/cos pairs for hour-of-day and day-of-month


def uses_elevation(ablation: str) -> bool:
    return ablation in ("inun_elev", "all")


def uses_covariates(ablation: str) -> bool:
    return ablation in ("inun_cov", "all")


def validate_ablation(ablation: str) -> str:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    return ablation


@dataclass(frozen=True)
class EncoderConfig:
    grid_size: int
    token_dim: int = 32
    conv_channels: tuple[int, ...] = (8,)
    pool_grid: int = 4
    ablation: str = "all"

    def __post_init__(self):
        validate_ablation(self.ablation)
        if len(self.conv_channels) < 1:
            raise ValueError("need at least one convolution block")

    @property
    def in_channels(self) -> int:
        return 2 if uses_elevation(self.ablation) else 1

    @property
    def feature_dim(self) -> int:
        return self.conv_channels[-1] * self.pool_grid**2

    @property
    def fuse_dim(self) -> int:
        return self.feature_dim + (COVARIATE_DIM if uses_covariates(self.ablation) else 0)


def default_conv_channels(grid_size: int) -> tuple[int, ...]:
    """One 8-channel block for 16-cell patches, three blocks for larger ones."""
    return (8,) if grid_size <= 16 else (16, 32, 64)


def default_token_dim(grid_size: int) -> int:
    if grid_size <= 64:
        return 32
    return 64 if grid_size <= 80 else 96


def encode_covariates(cov: CovariateSeries) -> np.ndarray:
    """(len, 4) features: sin/cos of 2*pi*hour/24 and 2*pi*(day-1)/31."""
    hour_phase = 2.0 * math.pi * cov.hour_of_day / 24.0
    day_phase = 2.0 * math.pi * (cov.day_of_month - 1) / 31.0
    return np.stack(
        [np.sin(hour_phase), np.cos(hour_phase), np.sin(day_phase), np.cos(day_phase)], axis=1
    )


def standardize_elevation(elev: ElevationGrid) -> np.ndarray:
    """Scale an elevation grid by its own mean/std (floored like window stats)."""
    std = max(float(np.std(elev.values)), STD_FLOOR)
    return (elev.values - float(np.mean(elev.values))) / std


def build_encoder_input(
    frames: np.ndarray, elevation: np.ndarray | None, ablation: str
) -> np.ndarray:
    """Stack (B, c, D, D) frames with the standardized elevation channel.

    Returns (B, c, ch, D, D) with ch = 1, or 2 when the ablation uses
    elevation; channel 0 is always the inundation frame.
    """
    validate_ablation(ablation)
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4:
        raise ValueError(f"expected (B, c, D, D) frames, got {frames.shape}")
    stacked = frames[:, :, None, :, :]
    if not uses_elevation(ablation):
        return stacked
    if elevation is None:
        raise ValueError(f"ablation {ablation!r} requires an elevation grid")
    elevation = np.asarray(elevation, dtype=np.float64)
    if elevation.shape[-2:] != frames.shape[-2:]:
        raise ValueError(
            f"elevation {elevation.shape[-2:]} does not match frames {frames.shape[-2:]}"
        )
    if elevation.ndim == 2:
        elevation = np.broadcast_to(elevation, frames.shape[:1] + elevation.shape)
    elev_channel = np.broadcast_to(
        elevation[:, None, None, :, :], stacked.shape
    )
    return np.concatenate([stacked, elev_channel], axis=2)


class ContextEncoder(Module):
    """Maps (context frames, elevation, covariates) to c embedding tokens."""

    def __init__(self, rng: np.random.Generator, config: EncoderConfig):
        self.config = config
        blocks = []
        ch = config.in_channels
        for out_ch in config.conv_channels:
            blocks.append(Conv2d(rng, ch, out_ch, 3))
            ch = out_ch
        self.blocks = blocks
        self.fuse = Linear(rng, config.fuse_dim, config.token_dim)

    def spatial_features(self, stacked: np.ndarray) -> Tensor:
        """(B, c, ch, D, D) -> (B*c, feature_dim) per-frame conv features."""
        b, c_len, ch, d, _ = stacked.shape
        if ch != self.config.in_channels:
            raise ValueError(
                f"encoder expects {self.config.in_channels} input channels, got {ch}"
            )
        h = Tensor(stacked.reshape(b * c_len, ch, d, d))
        for block in self.blocks:
            h = block(h).silu()
            h = avg_pool2(h)
        pooled = adaptive_avg_pool(h, self.config.pool_grid)
        return pooled.reshape(b * c_len, self.config.feature_dim)

    def __call__(
        self,
        frames: np.ndarray,
        elevation: np.ndarray | None,
        cov_features: np.ndarray | None,
    ) -> Tensor:
        """Embed a batch of context windows into (B, c, token_dim) tokens.

        frames: (B, c, D, D) standardized; elevation: (D, D) or (B, D, D)
        standardized; cov_features: (B, c, 4) from encode_covariates.
        """
        cfg = self.config
        stacked = build_encoder_input(frames, elevation, cfg.ablation)
        b, c_len = stacked.shape[:2]
        feats = self.spatial_features(stacked)
        if uses_covariates(cfg.ablation):
            if cov_features is None:
                raise ValueError(f"ablation {cfg.ablation!r} requires covariate features")
            cov_features = np.asarray(cov_features, dtype=np.float64)
            if cov_features.shape != (b, c_len, COVARIATE_DIM):
                raise ValueError(
                    f"covariates must be {(b, c_len, COVARIATE_DIM)}, got {cov_features.shape}"
                )
            feats = concat([feats, Tensor(cov_features.reshape(b * c_len, COVARIATE_DIM))], axis=1)
        tokens = self.fuse(feats)
        return tokens.reshape(b, c_len, cfg.token_dim)
