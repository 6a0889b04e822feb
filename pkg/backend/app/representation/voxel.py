#!/usr/bin/env python3
"""
Event embeddings: voxel grids and per-polarity temporal units

Voxel grids spread every event over the two nearest of B temporal bins with a
bilinear kernel, b* = (t - t0) / (t1 - t0) * (B - 1). Temporal units split a
shutter period into N equal slices holding per-pixel positive and negative
event counts. Readout-phase events are embedded like any other.
"""

from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import ConfigError, InputError
from backend.app.physics.events import EventStream

logger = create_component_logger("event_repr")

PolarityMode = Literal["signed", "two-channel"]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """B x H x W (signed) or 2 x B x H x W (two-channel: positive, negative)"""

    bins: np.ndarray
    t_span: Tuple[int, int]
    polarity_mode: PolarityMode = "signed"
    skipped_events: int = 0

    @property
    def num_bins(self) -> int:
        return int(self.bins.shape[-3])

    def total(self) -> float:
        return float(self.bins.sum())


@dataclass(frozen=True, eq=False)
class EventUnits:
    """N x 2 x H x W per-polarity counts; channel 0 positive, channel 1 negative"""

    units: np.ndarray
    t_span: Tuple[int, int]

    @property
    def N(self) -> int:
        return int(self.units.shape[0])

    @property
    def unit_span(self) -> float:
        return (self.t_span[1] - self.t_span[0]) / self.N

    def unit_windows(self) -> List[Tuple[float, float]]:
        t0 = self.t_span[0]
        return [(t0 + n * self.unit_span, t0 + (n + 1) * self.unit_span) for n in range(self.N)]


def _check_span(t_span: Tuple[int, int]) -> Tuple[int, int]:
    t0, t1 = int(t_span[0]), int(t_span[1])
    if t1 <= t0:
        raise InputError(f"degenerate time span {t_span}")
    return t0, t1


def to_voxel(
    stream: EventStream,
    t_span: Optional[Tuple[int, int]] = None,
    num_bins: int = 16,
    polarity_mode: PolarityMode = "signed",
) -> VoxelGrid:
    """Bilinear temporal voxel grid; events outside t_span are skipped and counted"""
    if num_bins < 1:
        raise ConfigError(f"voxel grid needs at least one bin, got {num_bins}")
    if polarity_mode not in ("signed", "two-channel"):
        raise ConfigError(f"unknown polarity mode: {polarity_mode}")
    t0, t1 = _check_span(t_span if t_span is not None else stream.t_span)

    height, width = stream.height, stream.width
    mask = stream.window_mask(t0, t1)
    skipped = int(len(stream) - mask.sum())
    if skipped:
        logger.debug("Events outside voxel span skipped", {"skipped": skipped, "t_span": [t0, t1]})

    t = stream.t[mask]
    pix = stream.y[mask] * width + stream.x[mask]
    p = stream.p[mask].astype(np.float64)

    b_star = (t - t0).astype(np.float64) / (t1 - t0) * (num_bins - 1)
    lower = np.floor(b_star).astype(np.int64)
    frac = b_star - lower
    upper = np.minimum(lower + 1, num_bins - 1)

    if polarity_mode == "signed":
        grid = np.zeros(num_bins * height * width, dtype=np.float64)
        np.add.at(grid, lower * height * width + pix, p * (1.0 - frac))
        np.add.at(grid, upper * height * width + pix, p * frac)
        bins = grid.reshape(num_bins, height, width)
    else:
        channel = (p < 0).astype(np.int64)
        plane = num_bins * height * width
        grid = np.zeros(2 * plane, dtype=np.float64)
        np.add.at(grid, channel * plane + lower * height * width + pix, 1.0 - frac)
        np.add.at(grid, channel * plane + upper * height * width + pix, frac)
        bins = grid.reshape(2, num_bins, height, width)

    return VoxelGrid(bins, (t0, t1), polarity_mode, skipped)


def split_units(
    source: Union[EventStream, VoxelGrid],
    N: int = 8,
    t_span: Optional[Tuple[int, int]] = None,
) -> EventUnits:
    """N equal temporal units of per-polarity counts"""
    if N < 1:
        raise ConfigError(f"number of temporal units must be positive, got {N}")

    if isinstance(source, VoxelGrid):
        if source.polarity_mode != "two-channel":
            raise ConfigError("units need a two-channel voxel grid")
        bins = source.num_bins
        if bins % N != 0:
            raise ConfigError(f"{bins} voxel bins do not split into {N} units")
        per_unit = bins // N
        _, _, height, width = source.bins.shape
        grouped = source.bins.reshape(2, N, per_unit, height, width).sum(axis=2)
        return EventUnits(np.ascontiguousarray(grouped.transpose(1, 0, 2, 3)), source.t_span)

    t0, t1 = _check_span(t_span if t_span is not None else source.t_span)
    height, width = source.height, source.width
    mask = source.window_mask(t0, t1)
    unit = (source.t[mask] - t0) * N // (t1 - t0)
    channel = (source.p[mask] < 0).astype(np.int64)
    pix = source.y[mask] * width + source.x[mask]

    flat = (unit * 2 + channel) * height * width + pix
    counts = np.bincount(flat, minlength=N * 2 * height * width)
    return EventUnits(counts.reshape(N, 2, height, width).astype(np.float64), (t0, t1))


def partition_past_current(
    stream: EventStream, shutter_periods: Sequence[Tuple[int, int]], index: int
) -> Tuple[EventStream, EventStream]:
    """(events of the previous period, events of period `index`); the first period has no past"""
    if not shutter_periods:
        raise ConfigError("at least one shutter period is required")
    for (_, end), (start, _) in zip(shutter_periods, shutter_periods[1:]):
        if end != start:
            raise ConfigError(f"shutter periods are not contiguous at {end} / {start}")
    if not 0 <= index < len(shutter_periods):
        raise ConfigError(f"period index {index} out of range")

    t_start, t_end = shutter_periods[index]
    current = stream.slice(t_start, t_end)
    if index == 0:
        past = EventStream.empty(stream.sensor_size, stream.beta, (t_start, t_start))
    else:
        past = stream.slice(*shutter_periods[index - 1])
    return past, current
