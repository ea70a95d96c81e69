"""Conditional UNet that predicts the clean frame from a noisy one.

Four down blocks and four mirrored up blocks, two residual layers each,
2x average-pool downsampling and nearest-neighbour upsampling, skip
connections between mirrored blocks, and single-head cross-attention onto the
context tokens in the deepest blocks. The noise step enters through a
sinusoidal embedding projected into every residual layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tidecast.nn.autograd import Tensor, avg_pool2, concat, take, upsample2
from tidecast.nn.layers import (
    Conv2d,
    CrossAttention,
    GroupNorm,
    Linear,
    Module,
    parameter,
    sinusoidal_embedding,
)


@dataclass(frozen=True)
class DenoiserConfig:
    grid_size: int
    token_dim: int = 32
    channels: tuple[int, ...] = (8, 16, 32, 32)
    resnet_layers: int = 2
    attention_blocks: int = 2
    groups: int = 8
    step_embed_dim: int = 32
    zero_init_output: bool = True
    # initial per-step input gate: x0hat = gate[n] * xn + net(...); seeding it
    # with sqrt(alpha_bar_n) makes the untrained net the best linear denoiser
    # for unit-scale data. Length fixes the supported number of noise steps.
    skip_init: tuple[float, ...] = tuple(1.0 for _ in range(20))

    def __post_init__(self):
        depth = len(self.channels)
        if self.grid_size % (2**depth):
            raise ValueError(
                f"grid size {self.grid_size} must be divisible by {2 ** depth} "
                f"for {depth} pooling levels"
            )
        if not 0 <= self.attention_blocks <= depth:
            raise ValueError("attention_blocks must be between 0 and the block count")
        for ch in self.channels:
            if ch % self.groups:
                raise ValueError(f"channel width {ch} not divisible by {self.groups} groups")
        if self.step_embed_dim % 2:
            raise ValueError("step_embed_dim must be even")
        if len(self.skip_init) < 1:
            raise ValueError("skip_init must cover at least one noise step")


def default_denoiser_config(
    grid_size: int, token_dim: int, skip_init: tuple[float, ...] | None = None
) -> DenoiserConfig:
    """Per-patch-size widths: (8,16,32,32) at D=16, (16,32,32,64) above."""
    channels = (8, 16, 32, 32) if grid_size <= 16 else (16, 32, 32, 64)
    kwargs = {} if skip_init is None else {"skip_init": skip_init}
    return DenoiserConfig(grid_size=grid_size, token_dim=token_dim, channels=channels, **kwargs)


class ResidualLayer(Module):
    def __init__(self, rng, in_ch: int, out_ch: int, step_dim: int, groups: int):
        self.norm1 = GroupNorm(groups, in_ch)
        self.conv1 = Conv2d(rng, in_ch, out_ch, 3)
        self.step_proj = Linear(rng, step_dim, out_ch)
        self.norm2 = GroupNorm(groups, out_ch)
        # residual branch starts at zero so every layer begins as identity(+skip)
        self.conv2 = Conv2d(rng, out_ch, out_ch, 3, zero_init=True)
        self.skip = Conv2d(rng, in_ch, out_ch, 1) if in_ch != out_ch else None

    def __call__(self, x: Tensor, step_emb: Tensor) -> Tensor:
        h = self.conv1(self.norm1(x).silu())
        bias = self.step_proj(step_emb)
        h = h + bias.reshape(bias.shape[0], bias.shape[1], 1, 1)
        h = self.conv2(self.norm2(h).silu())
        return h + (self.skip(x) if self.skip is not None else x)


class UNetBlock(Module):
    """Residual layers plus optional cross-attention; resampling lives outside."""

    def __init__(self, rng, in_ch, out_ch, step_dim, token_dim, groups, layers, attend):
        res = [ResidualLayer(rng, in_ch, out_ch, step_dim, groups)]
        for _ in range(layers - 1):
            res.append(ResidualLayer(rng, out_ch, out_ch, step_dim, groups))
        self.res = res
        self.attn = CrossAttention(rng, out_ch, token_dim, groups) if attend else None

    def __call__(self, x: Tensor, step_emb: Tensor, tokens: Tensor) -> Tensor:
        for layer in self.res:
            x = layer(x, step_emb)
        if self.attn is not None:
            x = self.attn(x, tokens)
        return x


class DenoiserUNet(Module):
    def __init__(self, rng: np.random.Generator, config: DenoiserConfig):
        self.config = config
        ch = config.channels
        depth = len(ch)
        step_dim = config.step_embed_dim
        attend = lambda i: i >= depth - config.attention_blocks  # noqa: E731

        self.step_mlp1 = Linear(rng, step_dim, step_dim)
        self.step_mlp2 = Linear(rng, step_dim, step_dim)
        self.stem = Conv2d(rng, 1, ch[0], 3)
        self.down = [
            UNetBlock(
                rng,
                ch[i - 1] if i else ch[0],
                ch[i],
                step_dim,
                config.token_dim,
                config.groups,
                config.resnet_layers,
                attend(i),
            )
            for i in range(depth)
        ]
        # up blocks consume the upsampled bottom path concatenated with the skip
        self.up = [
            UNetBlock(
                rng,
                (ch[i + 1] if i + 1 < depth else ch[-1]) + ch[i],
                ch[i],
                step_dim,
                config.token_dim,
                config.groups,
                config.resnet_layers,
                attend(i),
            )
            for i in range(depth - 1, -1, -1)
        ]
        self.out_norm = GroupNorm(config.groups, ch[0])
        self.out_conv = Conv2d(rng, ch[0], 1, 3, zero_init=config.zero_init_output)
        self.skip_gate = parameter(np.asarray(config.skip_init, dtype=np.float64))

    def step_embedding(self, n: np.ndarray) -> Tensor:
        emb = sinusoidal_embedding(n, self.config.step_embed_dim)
        return self.step_mlp2(self.step_mlp1(Tensor(emb)).silu())

    def predict_x0(self, xn: np.ndarray | Tensor, n: np.ndarray | int, tokens: Tensor) -> Tensor:
        """Denoise a batch: xn (B, 1, D, D), n (B,) in 1..N, tokens (B, c, e)."""
        x = xn if isinstance(xn, Tensor) else Tensor(np.asarray(xn, dtype=np.float64))
        b = x.shape[0]
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != x.shape[3]:
            raise ValueError(f"expected (B, 1, D, D) input, got {x.shape}")
        if x.shape[2] != self.config.grid_size:
            raise ValueError(
                f"grid size {x.shape[2]} does not match configured {self.config.grid_size}"
            )
        n = np.full(b, n, dtype=np.int64) if np.isscalar(n) else np.asarray(n, dtype=np.int64)
        if np.any(n < 1) or np.any(n > self.skip_gate.data.size):
            raise ValueError(f"noise step out of range 1..{self.skip_gate.data.size}: {n}")
        if tokens.ndim != 3 or tokens.shape[0] != b or tokens.shape[2] != self.config.token_dim:
            raise ValueError(
                f"tokens must be (B, c, {self.config.token_dim}), got {tokens.shape}"
            )
        step_emb = self.step_embedding(n)

        h = self.stem(x)
        skips = []
        depth = len(self.down)
        for i, block in enumerate(self.down):
            h = block(h, step_emb, tokens)
            skips.append(h)
            h = avg_pool2(h)
        for i, block in enumerate(self.up):
            h = upsample2(h)
            h = concat([h, skips[depth - 1 - i]], axis=1)
            h = block(h, step_emb, tokens)
        correction = self.out_conv(self.out_norm(h).silu())
        gate = take(self.skip_gate, n - 1).reshape(b, 1, 1, 1)
        return gate * x + correction
