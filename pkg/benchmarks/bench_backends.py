"""Benchmark the compiled im2col/col2im kernels against the numpy fallback.

Times the raw kernels and a full training step under each backend. The two
backends are bitwise identical in output; only speed differs. Run:

    python benchmarks/bench_backends.py [--repeat N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat: int) -> None:
    from tidecast.nn import _im2col_py, kernels

    try:
        from tidecast.nn import _im2col as compiled
    except ImportError:
        compiled = None
        print("compiled kernels unavailable; showing fallback only")

    cases = [
        ("encoder-ish  (384,2,18,18) k3", (384, 2, 18, 18), 3),
        ("unet shallow (32,8,18,18)  k3", (32, 8, 18, 18), 3),
        ("unet deep    (32,32,6,6)   k3", (32, 32, 6, 6), 3),
    ]
    rng = np.random.default_rng(0)
    print(f"\nactive backend: {kernels.backend_name()}")
    print(f"{'case':<32} {'numpy im2col':>13} {'cython im2col':>14} {'numpy col2im':>13} {'cython col2im':>14}")
    for label, shape, k in cases:
        xp = rng.standard_normal(shape)
        cols = _im2col_py.im2col(xp, k)
        t_py = time_call(lambda: _im2col_py.im2col(xp, k), repeat)
        t_cy = time_call(lambda: compiled.im2col(xp, k), repeat) if compiled else float("nan")
        g_py = time_call(
            lambda: _im2col_py.col2im(cols, shape[1], shape[2], shape[3], k), repeat
        )
        g_cy = (
            time_call(lambda: compiled.col2im(cols, shape[1], shape[2], shape[3], k), repeat)
            if compiled
            else float("nan")
        )
        print(
            f"{label:<32} {t_py * 1e3:>11.2f}ms {t_cy * 1e3:>12.2f}ms"
            f" {g_py * 1e3:>11.2f}ms {g_cy * 1e3:>12.2f}ms"
        )
        if compiled:
            assert (compiled.im2col(xp, k) == _im2col_py.im2col(xp, k)).all()


def bench_train_step(repeat: int) -> None:
    """Full train step (fwd+bwd+Adam) per backend, in a subprocess each."""
    script = r"""
import os, time
import numpy as np
from tidecast.nn import kernels
from tidecast.synth import SynthConfig
from tidecast.dataset import synthesize_dataset
from tidecast.training import (Adam, TrainConfig, make_batch, model_config_for,
                               prepare_training_windows, standardized_elevations, train_step)
from tidecast.model import Forecaster

data = synthesize_dataset(SynthConfig(patches=1, grid_size=16, timesteps=80, seed=0))
cfg = TrainConfig(epochs=1, seed=0)
model = Forecaster(model_config_for(data, cfg), seed=0)
windows = prepare_training_windows(data, cfg)[:32]
batch = make_batch(windows, standardized_elevations(data), cfg.ablation)
opt = Adam(model.named_parameters(), lr=1e-3)
rng = np.random.default_rng(0)
train_step(model, batch, opt, rng)  # warm-up
best = float('inf')
for _ in range(%d):
    t0 = time.perf_counter()
    train_step(model, batch, opt, rng)
    best = min(best, time.perf_counter() - t0)
print(f"{kernels.backend_name()}: {best*1e3:.1f} ms / step (batch 32, D=16)")
""" % repeat
    print("\nfull training step:")
    for backend in ("compiled", "python"):
        env = dict(os.environ, TIDECAST_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, "-c", script], env=env, capture_output=True, text=True
        )
        if proc.returncode:
            print(f"{backend}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
        else:
            print(proc.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    bench_kernels(args.repeat)
    bench_train_step(args.repeat)


if __name__ == "__main__":
    main()
