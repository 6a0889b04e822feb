"""Toy training run: the loss falls and ETES learns to favour the exposure phase"""

import time

import numpy as np
import pytest
import torch

from backend.app.analytics.activation import build_profile
from backend.app.core.config import DEFAULT_CONFIG_PATH, load_settings
from backend.app.models.network import DeblurNet, predict
from backend.app.physics.events import simulate_events
from backend.app.synthesis.scenes import random_motion_texture
from backend.app.synthesis.shutter import (
    MANIFEST_NAME,
    ShutterConfig,
    build_dataset,
    load_sample,
    read_manifest,
    variant_configs,
)
from backend.app.training.dataset import ManifestDataset, sample_arrays
from backend.app.training.trainer import Trainer

pytestmark = [pytest.mark.slow, pytest.mark.integration]

TOY_SETTINGS = DEFAULT_CONFIG_PATH.with_name("toy.yaml")
PERIOD = 16
BUDGET_SECONDS = 30 * 60


def synthesize(directory, seed, frames, configs):
    seq = random_motion_texture(48, 48, frames, seed=seed)
    build_dataset(seq, simulate_events(seq, beta=0.2), configs, directory)
    return directory / MANIFEST_NAME


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    settings = load_settings(TOY_SETTINGS)
    root = tmp_path_factory.mktemp("toy")
    train_manifest = synthesize(
        root / "train", 1, 10 * PERIOD,
        variant_configs("unknown+noise", [9, 11, 13, 15], PERIOD, seed=1),
    )
    held_out = synthesize(root / "held_out", 2, 20 * PERIOD, [ShutterConfig(m=11, n=PERIOD - 11, seed=2)])

    torch.manual_seed(settings.training.seed)
    model = DeblurNet(settings.model)
    dataset = ManifestDataset(
        train_manifest,
        settings.representation.voxel_bins,
        settings.representation.num_units,
        crop_size=settings.training.crop_size,
        seed=settings.training.seed,
    )
    started = time.perf_counter()
    result = Trainer(model, dataset, settings.training).fit()
    return settings, model, result, time.perf_counter() - started, held_out


def test_toy_config_fits_the_budget(toy_run):
    settings, _, result, elapsed, _ = toy_run
    assert settings.training.steps <= 2000
    assert len(result.losses) == settings.training.steps
    assert elapsed < BUDGET_SECONDS


def test_loss_halves_from_its_start(toy_run):
    _, _, result, _, _ = toy_run
    assert all(np.isfinite(result.losses))
    assert np.mean(result.losses[-10:]) <= 0.5 * np.mean(result.losses[:10])


def test_held_out_activation_favours_exposure(toy_run):
    settings, model, _, _, manifest = toy_run
    selective = []
    for record in read_manifest(manifest):
        loaded = load_sample(manifest, record)
        arrays = sample_arrays(
            loaded.blur, loaded.sharp, loaded.events, tuple(record.past_window), tuple(record.events_window),
            settings.representation.voxel_bins, settings.representation.num_units,
        )
        profile = build_profile(
            predict(model, arrays).activation, record.past_window, record.events_window,
            record.exposure_window, f"sample_{record.index:05d}", record.config_tag,
        )
        selective.append(profile.selectivity.selective)
    assert len(selective) == 20
    assert np.mean(selective) >= 0.8
