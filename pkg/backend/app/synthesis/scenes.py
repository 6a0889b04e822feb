#!/usr/bin/env python3
"""
Synthetic sharp-video scenes for simulation, dataset synthesis and tests

Every scene returns a FrameSequence with uniform microsecond timestamps and
intensities kept away from 0 so the log floor never engages.
"""

import numpy as np
from scipy import ndimage

from backend.app.core.errors import ConfigError
from backend.app.physics.frames import FrameSequence


def _check(height: int, width: int, n_frames: int) -> None:
    if height < 1 or width < 1 or n_frames < 1:
        raise ConfigError(f"scene size must be positive, got {height}x{width}x{n_frames}")


def static_scene(
    height: int, width: int, n_frames: int, fps: float = 240.0, value: float = 0.5
) -> FrameSequence:
    _check(height, width, n_frames)
    frames = np.full((n_frames, height, width), value, dtype=np.float64)
    return FrameSequence.uniform(frames, fps)


def translating_bar(
    height: int,
    width: int,
    n_frames: int,
    fps: float = 240.0,
    bar_width: int = 4,
    speed: float = 1.0,
    low: float = 0.2,
    high: float = 0.8,
) -> FrameSequence:
    """A bright vertical bar moving right by `speed` pixels per frame (wraps around)"""
    _check(height, width, n_frames)
    xs = np.arange(width)
    frames = np.full((n_frames, height, width), low, dtype=np.float64)
    for i in range(n_frames):
        left = int(np.floor(i * speed))
        cols = (xs - left) % width < bar_width
        frames[i][:, cols] = high
    return FrameSequence.uniform(frames, fps)


def translating_pattern(
    height: int,
    width: int,
    n_frames: int,
    fps: float = 240.0,
    speed: float = 1.0,
    period: float = 16.0,
    low: float = 0.2,
    high: float = 0.9,
) -> FrameSequence:
    """Smooth 2-D grating translating diagonally by `speed` pixels per frame"""
    _check(height, width, n_frames)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.empty((n_frames, height, width), dtype=np.float64)
    for i in range(n_frames):
        shift = i * speed
        wave = np.sin(2 * np.pi * (xx - shift) / period) + np.sin(2 * np.pi * (yy - 0.5 * shift) / period)
        frames[i] = low + (high - low) * (0.5 + 0.25 * wave)
    return FrameSequence.uniform(frames, fps)


def random_motion_texture(
    height: int,
    width: int,
    n_frames: int,
    seed: int = 0,
    fps: float = 240.0,
    max_step: float = 1.5,
    smoothing: float = 2.0,
    low: float = 0.1,
    high: float = 0.9,
) -> FrameSequence:
    """Smoothed noise texture following a seeded random walk with sub-pixel steps"""
    _check(height, width, n_frames)
    rng = np.random.default_rng(seed)
    margin = int(np.ceil(max_step * n_frames)) + 2
    canvas = ndimage.gaussian_filter(
        rng.random((height + 2 * margin, width + 2 * margin)), sigma=smoothing, mode="wrap"
    )
    canvas = (canvas - canvas.min()) / max(canvas.max() - canvas.min(), 1e-12)
    canvas = low + (high - low) * canvas

    steps = rng.uniform(-max_step, max_step, size=(n_frames, 2))
    steps[0] = 0.0
    offsets = np.cumsum(steps, axis=0)
    frames = np.empty((n_frames, height, width), dtype=np.float64)
    for i, (dy, dx) in enumerate(offsets):
        moved = ndimage.shift(canvas, (dy, dx), order=1, mode="wrap")
        frames[i] = moved[margin:margin + height, margin:margin + width]
    return FrameSequence.uniform(np.clip(frames, low, high), fps)