"""Diffusion noise schedule and the closed-form forward/reverse algebra.

The chain has N steps indexed n = 1..N. beta_n interpolates linearly between
the configured endpoints; alpha_n = 1 - beta_n and alpha_bar_n is the running
product. one_minus_alpha_bar is carried explicitly (recursion
omab_n = omab_{n-1} + abar_{n-1} * beta_n) so that 1 - alpha_bar stays exact
for n = 1, which in turn makes the reverse posterior exact at the n = 1
boundary: mean = predicted x0 and variance = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """beta / alpha / alpha_bar tables for an N-step diffusion chain."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    one_minus_alpha_bar: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D array")
        if np.any(beta <= 0) or np.any(beta > 1):
            raise ValueError("beta values must lie in (0, 1]")
        if np.any(np.diff(beta) < 0):
            raise ValueError("beta must be nondecreasing")
        if not np.array_equal(self.alpha, 1.0 - beta):
            raise ValueError("alpha must equal 1 - beta")
        prod = 1.0
        for n in range(beta.size):
            prod = prod * self.alpha[n]
            if self.alpha_bar[n] != prod:
                raise ValueError("alpha_bar must be the exact running product of alpha")

    @property
    def num_steps(self) -> int:
        return self.beta.size

    def check_step(self, n: int) -> None:
        if not 1 <= n <= self.num_steps:
            raise ValueError(f"noise step {n} out of range 1..{self.num_steps}")

    def abar(self, n: int) -> float:
        """alpha_bar_n with the convention alpha_bar_0 = 1."""
        return 1.0 if n == 0 else float(self.alpha_bar[n - 1])

    def omab(self, n: int) -> float:
        """1 - alpha_bar_n, exact at the boundaries (0 at n = 0)."""
        return 0.0 if n == 0 else float(self.one_minus_alpha_bar[n - 1])


def make_schedule(N: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Linear beta schedule from beta_min (n=1) to beta_max (n=N)."""
    if N < 1:
        raise ValueError(f"step count must be >= 1, got {N}")
    if not (0 < beta_min <= beta_max <= 1):
        raise ValueError(f"need 0 < beta_min <= beta_max <= 1, got [{beta_min}, {beta_max}]")
    beta = np.linspace(beta_min, beta_max, N)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    omab = np.empty(N)
    prev_omab, prev_abar = 0.0, 1.0
    for n in range(N):
        prev_omab = prev_omab + prev_abar * beta[n]
        omab[n] = prev_omab
        prev_abar = alpha_bar[n]
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, one_minus_alpha_bar=omab)


def forward_sample(x0: np.ndarray, n: int, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noised state x^n = sqrt(abar_n) x0 + sqrt(1 - abar_n) noise."""
    sched.check_step(n)
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs noise {noise.shape}")
    return np.sqrt(sched.abar(n)) * x0 + np.sqrt(sched.omab(n)) * noise


def forward_sample_batch(
    x0: np.ndarray, n: np.ndarray, noise: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """forward_sample with a per-sample step vector n of shape (B,)."""
    n = np.asarray(n)
    if np.any(n < 1) or np.any(n > sched.num_steps):
        raise ValueError(f"noise steps out of range 1..{sched.num_steps}")
    shape = (-1,) + (1,) * (x0.ndim - 1)
    abar = sched.alpha_bar[n - 1].reshape(shape)
    omab = sched.one_minus_alpha_bar[n - 1].reshape(shape)
    return np.sqrt(abar) * x0 + np.sqrt(omab) * noise


def posterior_mean_var(
    xn: np.ndarray, x0hat: np.ndarray, n: int, sched: NoiseSchedule
) -> tuple[np.ndarray, float]:
    """Reverse-step Gaussian parameters given the noisy state and predicted x0.

    mean = sqrt(alpha_n) (1 - abar_{n-1}) / (1 - abar_n) * xn
         + sqrt(abar_{n-1}) beta_n / (1 - abar_n) * x0hat
    var  = (1 - abar_{n-1}) beta_n / (1 - abar_n)

    At n = 1 (abar_0 = 1) this reduces exactly to (x0hat, 0).
    """
    sched.check_step(n)
    xn = np.asarray(xn, dtype=np.float64)
    x0hat = np.asarray(x0hat, dtype=np.float64)
    if xn.shape != x0hat.shape:
        raise ValueError(f"shape mismatch: xn {xn.shape} vs x0hat {x0hat.shape}")
    beta_n = float(sched.beta[n - 1])
    alpha_n = float(sched.alpha[n - 1])
    omab_n = max(sched.omab(n), 1e-12)
    omab_prev = sched.omab(n - 1)
    abar_prev = sched.abar(n - 1)
    coef_xn = np.sqrt(alpha_n) * omab_prev / omab_n
    coef_x0 = np.sqrt(abar_prev) * beta_n / omab_n
    mean = coef_xn * xn + coef_x0 * x0hat
    var = omab_prev * beta_n / omab_n
    return mean, var
