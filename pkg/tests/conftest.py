import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tidecast.dataset import split_chronological, synthesize_dataset
from tidecast.model import Forecaster
from tidecast.synth import SynthConfig
from tidecast.training import TrainConfig, fit, model_config_for


@pytest.fixture(scope="session")
def tiny_dataset():
    """K=2 patches, D=16, 160 hours of tide-driven bathtub data."""
    return synthesize_dataset(SynthConfig(patches=2, grid_size=16, timesteps=160, seed=11))


@pytest.fixture(scope="session")
def tiny_splits(tiny_dataset):
    return split_chronological(tiny_dataset, 112, 24, 24)


@pytest.fixture(scope="session")
def small_train_config():
    return TrainConfig(epochs=2, seed=5)


@pytest.fixture(scope="session")
def trained_small(tiny_splits, small_train_config):
    """A briefly trained full-size (D=16) model; shared to keep the suite fast."""
    train, val, _ = tiny_splits
    return fit(train, val, small_train_config)


@pytest.fixture(scope="session")
def fresh_model(tiny_dataset, small_train_config):
    return Forecaster(model_config_for(tiny_dataset, small_train_config), seed=3)


def small_denoiser_config(**overrides):
    """A deliberately tiny denoiser for gradient checks (< 50k parameters)."""
    from tidecast.denoiser import DenoiserConfig

    base = dict(
        grid_size=16,
        token_dim=8,
        channels=(4, 4, 8, 8),
        resnet_layers=2,
        attention_blocks=2,
        groups=4,
        step_embed_dim=8,
        zero_init_output=False,
        skip_init=tuple(np.linspace(1.0, 0.0, 6)),
    )
    base.update(overrides)
    return DenoiserConfig(**base)
