#!/usr/bin/env python3
"""
Network inputs from synthesized samples

A sample becomes four arrays: the blurred frame and sharp target as
[C, H, W], the previous period's voxel grid [bins, H, W] and the current
period's temporal units [N, 2, H, W]. Only these reach the network; the
exposure/readout split stays in the manifest.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from torch.utils.data import Dataset

from backend.app.core.errors import ConfigError, InputError
from backend.app.physics.events import EventStream
from backend.app.representation.voxel import split_units, to_voxel
from backend.app.synthesis.shutter import ManifestRecord, load_sample, read_manifest


def _planar(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image[None] if image.ndim == 2 else np.moveaxis(image, -1, 0)


def sample_arrays(
    blur: np.ndarray,
    sharp: np.ndarray,
    events: EventStream,
    past_window: Tuple[int, int],
    events_window: Tuple[int, int],
    voxel_bins: int = 16,
    num_units: int = 8,
) -> Dict[str, np.ndarray]:
    """Embed one sample's events next to its frames"""
    height, width = np.shape(blur)[:2]
    if past_window[1] > past_window[0]:
        past = to_voxel(events, past_window, voxel_bins).bins
    else:
        past = np.zeros((voxel_bins, height, width), dtype=np.float64)
    units = split_units(events, num_units, t_span=events_window).units
    return {
        "blur": _planar(blur),
        "sharp": _planar(sharp),
        "past_voxel": past,
        "units": units,
    }


def crop_arrays(arrays: Dict[str, np.ndarray], top: int, left: int, size: int) -> Dict[str, np.ndarray]:
    return {k: v[..., top:top + size, left:left + size] for k, v in arrays.items()}


class ManifestDataset(Dataset):
    """Samples of a manifest.jsonl, optionally filtered by tag and randomly cropped"""

    def __init__(
        self,
        manifest_path: Union[str, Path],
        voxel_bins: int = 16,
        num_units: int = 8,
        crop_size: Optional[int] = None,
        seed: int = 0,
        tags: Optional[List[str]] = None,
    ):
        self.manifest_path = Path(manifest_path)
        records = read_manifest(self.manifest_path)
        if tags is not None:
            records = [r for r in records if r.config_tag in tags]
        if not records:
            raise InputError("manifest selects no samples", path=str(self.manifest_path))
        self.records: List[ManifestRecord] = records
        self.voxel_bins = voxel_bins
        self.num_units = num_units
        self.crop_size = crop_size
        self.seed = seed
        self.epoch = 0
        self._cache: Dict[int, Dict[str, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.records)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def arrays(self, idx: int) -> Dict[str, np.ndarray]:
        """Uncropped arrays of one record (cached)"""
        if idx not in self._cache:
            record = self.records[idx]
            loaded = load_sample(self.manifest_path, record)
            self._cache[idx] = sample_arrays(
                loaded.blur, loaded.sharp, loaded.events,
                tuple(record.past_window), tuple(record.events_window),
                self.voxel_bins, self.num_units,
            )
        return self._cache[idx]

    def __getitem__(self, idx: int) -> Dict[str, torch.Tensor]:
        arrays = self.arrays(idx)
        if self.crop_size is not None:
            height, width = arrays["blur"].shape[-2:]
            size = self.crop_size
            if size > height or size > width:
                raise ConfigError(f"crop {size} exceeds sample size {height}x{width}")
            rng = np.random.default_rng([self.seed, self.epoch, idx])
            top = int(rng.integers(0, height - size + 1))
            left = int(rng.integers(0, width - size + 1))
            arrays = crop_arrays(arrays, top, left, size)
        batch = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in arrays.items()}
        batch["index"] = torch.tensor(idx)
        return batch
