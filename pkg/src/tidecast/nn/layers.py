"""Parameterized layers on top of the autograd tape.

Modules register parameters and child modules simply by attribute assignment
order, which gives a stable, deterministic parameter ordering for the
optimizer, checkpointing, and bitwise-reproducible training.
"""

from __future__ import annotations

import math

import numpy as np

from tidecast.nn.autograd import Tensor, concat, conv2d


class Module:
    """Base class: walks instance attributes to find parameters and children."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        found: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                found.append((full, value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(f"{full}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{full}.{i}."))
        return found

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.data.shape}")
            p.data = arr.copy()


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def kaiming(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, zero_init: bool = False):
        if zero_init:
            self.weight = parameter(np.zeros((in_dim, out_dim)))
        else:
            self.weight = parameter(kaiming(rng, (in_dim, out_dim), in_dim))
        self.bias = parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class Conv2d(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        in_ch: int,
        out_ch: int,
        kernel: int = 3,
        zero_init: bool = False,
    ):
        self.kernel = kernel
        shape = (out_ch, in_ch, kernel, kernel)
        if zero_init:
            self.weight = parameter(np.zeros(shape))
        else:
            self.weight = parameter(kaiming(rng, shape, in_ch * kernel * kernel))
        self.bias = parameter(np.zeros(out_ch))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        if channels % groups:
            raise ValueError(f"channels {channels} not divisible by {groups} groups")
        self.groups = groups
        self.channels = channels
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(b, g, (c // g) * h * w)
        mu = xg.mean(axis=2, keepdims=True)
        centered = xg - mu
        var = (centered * centered).mean(axis=2, keepdims=True)
        normed = centered * (var + self.eps) ** (-0.5)
        normed = normed.reshape(b, c, h, w)
        return normed * self.gamma.reshape(1, c, 1, 1) + self.beta.reshape(1, c, 1, 1)


class CrossAttention(Module):
    """Single-head attention from spatial positions onto context tokens."""

    def __init__(self, rng: np.random.Generator, channels: int, token_dim: int, groups: int):
        self.channels = channels
        self.norm = GroupNorm(groups, channels)
        self.query = parameter(kaiming(rng, (channels, channels), channels))
        self.key = parameter(kaiming(rng, (token_dim, channels), token_dim))
        self.value = parameter(kaiming(rng, (token_dim, channels), token_dim))
        self.out = parameter(kaiming(rng, (channels, channels), channels))

    def __call__(self, x: Tensor, tokens: Tensor) -> Tensor:
        b, c, h, w = x.shape
        normed = self.norm(x)
        q = normed.reshape(b, c, h * w).transpose(0, 2, 1) @ self.query  # (B, HW, C)
        k = tokens @ self.key  # (B, c_len, C)
        v = tokens @ self.value
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(c))
        attended = scores.softmax() @ v  # (B, HW, C)
        projected = (attended @ self.out).transpose(0, 2, 1).reshape(b, c, h, w)
        return x + projected


def sinusoidal_embedding(values: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic sin/cos positional embedding of integer values, shape (B, dim)."""
    if dim % 2:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = np.asarray(values, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


__all__ = [
    "Module",
    "Linear",
    "Conv2d",
    "GroupNorm",
    "CrossAttention",
    "Tensor",
    "concat",
    "parameter",
    "sinusoidal_embedding",
]
