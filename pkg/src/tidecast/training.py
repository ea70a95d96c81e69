"""Training loop: squared-error denoising objective with Adam and a step LR.

Per sample the loop draws a noise step n uniformly from 1..N, noises the
standardized target frame with the closed-form forward kernel, embeds the
window's context, predicts the clean frame, and minimizes the mean squared
error over the batch and cells. Windows from all patches are pooled and
shuffled into common batches, so one model serves every patch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tidecast.dataset import FloodDataset
from tidecast.encoder import encode_covariates, standardize_elevation, uses_covariates
from tidecast.grid import Window, make_windows, standardize_window
from tidecast.metrics import nacrps
from tidecast.model import Checkpoint, Forecaster, ModelConfig
from tidecast.nn.autograd import Tensor
from tidecast.sampling import rollout
from tidecast.schedule import NoiseSchedule, forward_sample_batch


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_step: int = 5
    lr_factor: float = 0.5
    epochs: int = 30
    batch_size: int = 32
    context_length: int = 12
    train_prediction_length: int = 1
    diffusion_steps: int = 20
    beta_min: float = 1e-4
    beta_max: float = 1.0
    ablation: str = "all"
    seed: int = 0
    stride: int = 1
    grad_clip: float = 1.0
    val_scenarios: int = 2
    val_prediction_length: int = 12

    def __post_init__(self):
        for name in ("learning_rate", "lr_step", "lr_factor", "epochs", "batch_size",
                     "context_length", "train_prediction_length", "diffusion_steps",
                     "beta_min", "beta_max", "stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index (halved every lr_step epochs)."""
        return self.learning_rate * self.lr_factor ** (epoch // self.lr_step)


def parse_config_file(path: str | Path, cls=TrainConfig):
    """Flat `key = value` text config; unknown keys are rejected."""
    fields = {f.name: f.type for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        default = cls.__dataclass_fields__[key].default  # type: ignore[attr-defined]
        if isinstance(default, bool):
            values[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            values[key] = int(value)
        elif isinstance(default, float):
            values[key] = float(value)
        else:
            values[key] = value
    return cls(**values)


class Adam:
    """Adam with the usual bias correction; one slot pair per parameter."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.named = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params}
        self.v = {name: np.zeros_like(p.data) for name, p in params}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, p in self.named:
            g = p.grad
            if g is None:
                continue
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p.data = p.data - self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        scalars = {
            "step_count": self.step_count,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "lr": self.lr,
        }
        arrays = {}
        for name in self.m:
            arrays[f"adam.m.{name}"] = self.m[name]
            arrays[f"adam.v.{name}"] = self.v[name]
        return scalars, arrays


def clip_gradients(params: list[Tensor], max_norm: float) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def draw_noise_steps(rng: np.random.Generator, count: int, num_steps: int) -> np.ndarray:
    """n ~ Uniform{1..N} per sample."""
    return rng.integers(1, num_steps + 1, size=count)


@dataclass
class Batch:
    """Dense arrays for one training batch of standardized L=1 windows."""

    contexts: np.ndarray  # (B, c, D, D)
    targets: np.ndarray  # (B, 1, D, D)
    elevations: np.ndarray | None  # (B, D, D) standardized
    cov_features: np.ndarray | None  # (B, c, 4)
    window_ids: list[str] = field(default_factory=list)


def make_batch(windows: list[Window], elev_by_patch: dict[str, np.ndarray] | None,
               ablation: str) -> Batch:
    contexts = np.stack([w.context for w in windows])
    targets = np.stack([w.target[:1] for w in windows])
    elevations = None
    if elev_by_patch is not None:
        elevations = np.stack([elev_by_patch[w.patch_id] for w in windows])
    cov = None
    if uses_covariates(ablation):
        cov = np.stack([encode_covariates(w.context_covariates) for w in windows])
    ids = [f"{w.patch_id}@{w.context_covariates.timestamps[0]}" for w in windows]
    return Batch(contexts, targets, elevations, cov, ids)


def batch_loss(model: Forecaster, batch: Batch, n: np.ndarray, noise: np.ndarray) -> Tensor:
    """Mean squared denoising error of one batch for fixed steps and noise."""
    xn = forward_sample_batch(batch.targets, n, noise, model.schedule)
    tokens = model.embed_context(batch.contexts, batch.elevations, batch.cov_features)
    x0hat = model.predict_x0(xn, n, tokens)
    diff = x0hat - Tensor(batch.targets)
    return (diff * diff).mean()


def train_step(model: Forecaster, batch: Batch, optimizer: Adam,
               rng: np.random.Generator, grad_clip: float = 1.0) -> float:
    """One optimizer step; returns the pre-step loss."""
    sched: NoiseSchedule = model.schedule
    b = batch.targets.shape[0]
    n = draw_noise_steps(rng, b, sched.num_steps)
    noise = rng.standard_normal(batch.targets.shape)
    model.zero_grad()
    loss = batch_loss(model, batch, n, noise)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDiverged(
            f"non-finite loss at optimizer step {optimizer.step_count + 1}: "
            f"loss={value}, noise steps={n.tolist()}, batch={batch.window_ids}"
        )
    loss.backward()
    clip_gradients(model.parameters(), grad_clip)
    optimizer.step()
    return value


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_nacrps: float
    lr: float


@dataclass
class FitResult:
    model: Forecaster
    history: list[EpochRecord]
    best_epoch: int | None
    best_val_nacrps: float | None
    best_params: dict[str, np.ndarray] | None
    optimizer: Adam


def prepare_training_windows(data: FloodDataset, cfg: TrainConfig) -> list[Window]:
    windows: list[Window] = []
    for patch in data.patches:
        raw = make_windows(
            patch.series, patch.covariates, cfg.context_length,
            cfg.train_prediction_length, cfg.stride,
        )
        windows.extend(standardize_window(w) for w in raw)
    return windows


def standardized_elevations(data: FloodDataset) -> dict[str, np.ndarray]:
    return {p.patch_id: standardize_elevation(p.elevation) for p in data.patches}


def validation_nacrps(model: Forecaster, val: FloodDataset, cfg: TrainConfig,
                      seed: int) -> float:
    """NACRPS of short rollouts over the validation windows (physical units).

    Returns NaN when every validation observation is zero (metric undefined).
    """
    elevs = standardized_elevations(val) if uses_elevation_needed(model) else None
    ensembles = []
    observations = []
    for w_index, patch in enumerate(val.patches):
        windows = make_windows(
            patch.series, patch.covariates, cfg.context_length,
            cfg.val_prediction_length, cfg.val_prediction_length,
        )
        for v_index, window in enumerate(windows):
            std = standardize_window(window)
            elev = elevs[patch.patch_id] if elevs is not None else None
            ens = rollout(
                model, std, elev,
                horizon=cfg.val_prediction_length,
                num_scenarios=cfg.val_scenarios,
                seed=[seed, w_index, v_index],
            )
            ensembles.append(ens.members)
            observations.append(window.target)
    members = np.concatenate([e.reshape(e.shape[0], -1) for e in ensembles], axis=1)
    obs = np.concatenate([o.reshape(-1) for o in observations])
    try:
        return nacrps(members, obs)
    except ValueError:
        return float("nan")


def uses_elevation_needed(model: Forecaster) -> bool:
    return model.config.encoder.in_channels == 2


def fit(train: FloodDataset, val: FloodDataset | None, cfg: TrainConfig,
        model: Forecaster | None = None) -> FitResult:
    """Run the full schedule; tracks the best validation checkpoint."""
    if model is None:
        model = Forecaster(model_config_for(train, cfg), seed=cfg.seed)
    windows = prepare_training_windows(train, cfg)
    if not windows:
        raise ValueError("no training windows: dataset too short for the configured lengths")
    elevs = standardized_elevations(train) if uses_elevation_needed(model) else None

    root = np.random.SeedSequence(cfg.seed)
    shuffle_rng = np.random.default_rng(root.spawn(1)[0])
    step_rng = np.random.default_rng(root.spawn(1)[0])

    optimizer = Adam(model.named_parameters(), lr=cfg.lr_at(0))
    history: list[EpochRecord] = []
    best_epoch, best_val, best_params = None, None, None

    for epoch in range(cfg.epochs):
        optimizer.lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(len(windows))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chosen = [windows[i] for i in order[start : start + cfg.batch_size]]
            batch = make_batch(chosen, elevs, cfg.ablation)
            losses.append(train_step(model, batch, optimizer, step_rng, cfg.grad_clip))
        epoch_loss = float(np.mean(losses))
        val_score = float("nan")
        if val is not None and val.patches:
            val_score = validation_nacrps(model, val, cfg, seed=cfg.seed)
            if math.isfinite(val_score) and (best_val is None or val_score < best_val):
                best_epoch, best_val = epoch, val_score
                best_params = {k: v.copy() for k, v in model.state_dict().items()}
        history.append(EpochRecord(epoch, epoch_loss, val_score, optimizer.lr))
    return FitResult(model, history, best_epoch, best_val, best_params, optimizer)


def model_config_for(data: FloodDataset, cfg: TrainConfig) -> ModelConfig:
    return ModelConfig(
        grid_size=data.grid_size,
        context_length=cfg.context_length,
        ablation=cfg.ablation,
        diffusion_steps=cfg.diffusion_steps,
        beta_min=cfg.beta_min,
        beta_max=cfg.beta_max,
    )


def checkpoint_from_fit(result: FitResult, cfg: TrainConfig, use_best: bool = False) -> Checkpoint:
    params = result.best_params if (use_best and result.best_params is not None) else result.model.state_dict()
    scalars, arrays = result.optimizer.state()
    return Checkpoint(
        config=result.model.config,
        params={k: v.copy() for k, v in params.items()},
        epoch=len(result.history),
        seed=cfg.seed,
        optimizer=scalars,
        opt_arrays=arrays,
        best_val_nacrps=result.best_val_nacrps,
    )


def write_history_csv(path: str | Path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "val_nacrps", "lr"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.loss), repr(rec.val_nacrps), repr(rec.lr)])
