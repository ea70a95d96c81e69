"""Full forecaster: context encoder + denoiser UNet + noise schedule.

Checkpoints are a self-describing binary container: the magic line
"DFCKPT1\\n", an 8-byte little-endian header length, a JSON header (model
config, epoch, seed, optimizer scalars, array manifest), then the raw
float64 bytes of every listed array in order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from tidecast.denoiser import DenoiserConfig, DenoiserUNet, default_denoiser_config
from tidecast.encoder import (
    ContextEncoder,
    EncoderConfig,
    default_conv_channels,
    default_token_dim,
    validate_ablation,
)
from tidecast.nn.autograd import Tensor
from tidecast.nn.layers import Module
from tidecast.schedule import NoiseSchedule, make_schedule

CHECKPOINT_MAGIC = b"DFCKPT1\n"


@dataclass(frozen=True)
class ModelConfig:
    grid_size: int
    context_length: int = 12
    ablation: str = "all"
    diffusion_steps: int = 20
    beta_min: float = 1e-4
    beta_max: float = 1.0
    encoder: EncoderConfig = None  # type: ignore[assignment]
    denoiser: DenoiserConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        validate_ablation(self.ablation)
        if self.encoder is None:
            object.__setattr__(
                self,
                "encoder",
                EncoderConfig(
                    grid_size=self.grid_size,
                    token_dim=default_token_dim(self.grid_size),
                    conv_channels=default_conv_channels(self.grid_size),
                    ablation=self.ablation,
                ),
            )
        if self.denoiser is None:
            sched = make_schedule(self.diffusion_steps, self.beta_min, self.beta_max)
            object.__setattr__(
                self,
                "denoiser",
                default_denoiser_config(
                    self.grid_size,
                    self.encoder.token_dim,
                    skip_init=tuple(np.sqrt(sched.alpha_bar)),
                ),
            )
        if self.encoder.ablation != self.ablation:
            raise ValueError("encoder ablation must match the model ablation")
        if self.encoder.grid_size != self.grid_size or self.denoiser.grid_size != self.grid_size:
            raise ValueError("component grid sizes must match the model grid size")
        if self.denoiser.token_dim != self.encoder.token_dim:
            raise ValueError("denoiser token_dim must match the encoder token_dim")
        if len(self.denoiser.skip_init) != self.diffusion_steps:
            raise ValueError("denoiser skip gate must cover every diffusion step")

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["encoder"]["conv_channels"] = list(self.encoder.conv_channels)
        out["denoiser"]["channels"] = list(self.denoiser.channels)
        out["denoiser"]["skip_init"] = list(self.denoiser.skip_init)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        enc = dict(data["encoder"])
        enc["conv_channels"] = tuple(enc["conv_channels"])
        den = dict(data["denoiser"])
        den["channels"] = tuple(den["channels"])
        den["skip_init"] = tuple(den["skip_init"])
        kwargs = {k: v for k, v in data.items() if k not in ("encoder", "denoiser")}
        return cls(encoder=EncoderConfig(**enc), denoiser=DenoiserConfig(**den), **kwargs)


class Forecaster(Module):
    """Encoder + denoiser pair sharing one schedule and config."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1001]))
        self.encoder = ContextEncoder(rng, config.encoder)
        self.denoiser = DenoiserUNet(rng, config.denoiser)
        self.schedule: NoiseSchedule = make_schedule(
            config.diffusion_steps, config.beta_min, config.beta_max
        )

    def embed_context(
        self,
        frames: np.ndarray,
        elevation: np.ndarray | None,
        cov_features: np.ndarray | None,
    ) -> Tensor:
        return self.encoder(frames, elevation, cov_features)

    def predict_x0(self, xn, n, tokens: Tensor) -> Tensor:
        return self.denoiser.predict_x0(xn, n, tokens)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    epoch: int = 0
    seed: int = 0
    optimizer: dict = field(default_factory=dict)
    opt_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    best_val_nacrps: float | None = None

    @property
    def checkpoint_id(self) -> str:
        """Stable content hash of config + parameters."""
        digest = hashlib.sha256()
        digest.update(json.dumps(self.config.to_json_dict(), sort_keys=True).encode())
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(self.params[name].tobytes())
        return digest.hexdigest()[:12]


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    manifest = []
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype=np.float64)
        arrays.append((name, arr))
        manifest.append({"name": name, "shape": list(arr.shape), "kind": "param"})
    for name in sorted(ckpt.opt_arrays):
        arr = np.ascontiguousarray(ckpt.opt_arrays[name], dtype=np.float64)
        arrays.append((name, arr))
        manifest.append({"name": name, "shape": list(arr.shape), "kind": "opt"})
    header = {
        "config": ckpt.config.to_json_dict(),
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "optimizer": ckpt.optimizer,
        "best_val_nacrps": ckpt.best_val_nacrps,
        "arrays": manifest,
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode())
        params: dict[str, np.ndarray] = {}
        opt_arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            if entry["kind"] == "param":
                params[entry["name"]] = data.copy()
            else:
                opt_arrays[entry["name"]] = data.copy()
    return Checkpoint(
        config=ModelConfig.from_json_dict(header["config"]),
        params=params,
        epoch=header["epoch"],
        seed=header["seed"],
        optimizer=header.get("optimizer", {}),
        opt_arrays=opt_arrays,
        best_val_nacrps=header.get("best_val_nacrps"),
    )


def model_from_checkpoint(ckpt: Checkpoint) -> Forecaster:
    model = Forecaster(ckpt.config, seed=ckpt.seed)
    model.load_state_dict(ckpt.params)
    return model


def load_model(path: str | Path) -> tuple[Forecaster, Checkpoint]:
    ckpt = load_checkpoint(path)
    return model_from_checkpoint(ckpt), ckpt
