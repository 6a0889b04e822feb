"""Shared fixtures for the ETES test suite"""

import numpy as np
import pytest
import torch

from backend.app.core.config import ModelConfig
from backend.app.synthesis.scenes import translating_bar, translating_pattern


@pytest.fixture
def float64():
    """Run a test with float64 as the torch default dtype"""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    try:
        yield torch.float64
    finally:
        torch.set_default_dtype(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def bar_scene():
    return translating_bar(16, 16, 16)


@pytest.fixture
def pattern_scene():
    return translating_pattern(16, 16, 16)


@pytest.fixture
def tiny_model_config():
    """A network small enough to train for a few steps in a unit test"""
    return ModelConfig(
        image_channels=1,
        voxel_bins=4,
        num_units=2,
        frame_channels=[4, 8, 8],
        event_channels=[4, 4, 4],
        hidden_channels=4,
        gn_groups=2,
        filter_kernel=3,
    )


def make_batch(config: ModelConfig, batch: int = 1, size: int = 8, seed: int = 0):
    """Random network inputs matching a model config"""
    g = torch.Generator().manual_seed(seed)
    dtype = torch.get_default_dtype()
    return {
        "blur": torch.rand(batch, config.image_channels, size, size, generator=g, dtype=dtype),
        "sharp": torch.rand(batch, config.image_channels, size, size, generator=g, dtype=dtype),
        "past_voxel": torch.randn(batch, config.voxel_bins, size, size, generator=g, dtype=dtype),
        "units": torch.randint(0, 3, (batch, config.num_units, 2, size, size), generator=g).to(dtype),
        "index": torch.arange(batch),
    }
