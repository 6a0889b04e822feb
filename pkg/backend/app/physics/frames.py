#!/usr/bin/env python3
"""
Intensity frame sequences

Frames are float64 planes in [0, 1], either H x W or H x W x 3, with
strictly increasing integer timestamps in microseconds.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from backend.app.core.config import LUMA_WEIGHTS
from backend.app.core.errors import InputError


def to_luma(plane: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an H x W x 3 plane (H x W planes pass through)"""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim == 2:
        return plane
    if plane.ndim == 3 and plane.shape[-1] == 3:
        return plane @ np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    raise InputError(f"expected H x W or H x W x 3 plane, got shape {plane.shape}")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Sharp (latent) or captured frames with their timestamps"""

    frames: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if frames.ndim not in (3, 4) or (frames.ndim == 4 and frames.shape[-1] != 3):
            raise InputError(f"frames must be N x H x W or N x H x W x 3, got {frames.shape}")
        if len(frames) != len(timestamps):
            raise InputError(
                f"{len(frames)} frames but {len(timestamps)} timestamps"
            )
        if len(timestamps) > 1 and np.any(np.diff(timestamps) <= 0):
            raise InputError("frame timestamps must be strictly increasing")
        if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
            raise InputError("frame intensities must lie in [0, 1]")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", timestamps)

    @classmethod
    def uniform(cls, frames: Sequence[np.ndarray], fps: float, t0: int = 0) -> "FrameSequence":
        """Frames spaced round(1e6 / fps) microseconds apart"""
        dt = int(round(1e6 / fps))
        if dt < 1:
            raise InputError(f"fps {fps} gives a sub-microsecond frame spacing")
        stack = np.stack([np.asarray(f, dtype=np.float64) for f in frames])
        return cls(stack, t0 + dt * np.arange(len(stack), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def is_color(self) -> bool:
        return self.frames.ndim == 4

    @property
    def shape(self) -> Tuple[int, int]:
        """(H, W)"""
        return int(self.frames.shape[1]), int(self.frames.shape[2])

    @property
    def frame_interval(self) -> int:
        """Median spacing in microseconds (uniform spacing assumed)"""
        if len(self.timestamps) < 2:
            raise InputError("frame interval needs at least two frames")
        return int(np.median(np.diff(self.timestamps)))

    def luma(self) -> np.ndarray:
        if not self.is_color:
            return self.frames
        return self.frames @ np.asarray(LUMA_WEIGHTS, dtype=np.float64)

    def subset(self, indices: Sequence[int]) -> "FrameSequence":
        idx = np.asarray(list(indices), dtype=np.int64)
        return FrameSequence(self.frames[idx], self.timestamps[idx])
