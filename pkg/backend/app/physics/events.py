#!/usr/bin/env python3
"""
Event streams and the contrast-threshold event model

A pixel fires one event of polarity sign(d) each time its log intensity
moves a full contrast threshold beta away from its reference level; the
reference then advances by that threshold, so sub-threshold residuals carry
over to the next frame pair. Brightness between two frames is recovered as
I2 = I1 * exp(beta * signed event count).

Time windows are half-open, [t1, t2), everywhere.
"""

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import DimensionError, InputError
from backend.app.physics.frames import FrameSequence

logger = create_component_logger("event_physics")

# guards floor(|d| / beta) against representation error at exact multiples
_QUANT_EPS = 1e-9


@dataclass(frozen=True)
class Event:
    """A single polarity event"""

    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events from one sensor, stored column-wise"""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    sensor_size: Tuple[int, int]
    beta: float
    t_span: Tuple[int, int]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        x = np.asarray(self.x, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        p = np.asarray(self.p, dtype=np.int8)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise InputError("event columns have different lengths")
        if self.beta <= 0:
            raise InputError(f"contrast threshold must be positive, got {self.beta}")
        width, height = self.sensor_size
        t_start, t_end = self.t_span
        if t_end < t_start:
            raise InputError(f"invalid time span {self.t_span}")
        if len(t):
            if t.min() < t_start or t.max() >= t_end:
                raise InputError(f"event timestamps fall outside t_span {self.t_span}")
            if x.min() < 0 or x.max() >= width or y.min() < 0 or y.max() >= height:
                raise InputError(f"event coordinates fall outside sensor {self.sensor_size}")
            if not np.all(np.isin(p, (-1, 1))):
                raise InputError("polarities must be +1 or -1")
            order = np.lexsort((p, x, y, t))
            if np.any(order != np.arange(len(t))):
                raise InputError("events must be sorted by (t, y, x, p)")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sensor_size", (int(width), int(height)))
        object.__setattr__(self, "t_span", (int(t_start), int(t_end)))

    @classmethod
    def build(
        cls,
        t: Sequence[int],
        x: Sequence[int],
        y: Sequence[int],
        p: Sequence[int],
        sensor_size: Tuple[int, int],
        beta: float,
        t_span: Optional[Tuple[int, int]] = None,
    ) -> "EventStream":
        """Sort arbitrary columns into canonical (t, y, x, p) order"""
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = np.asarray(p, dtype=np.int8)
        order = np.lexsort((p, x, y, t))
        if t_span is None:
            t_span = (int(t.min()), int(t.max()) + 1) if len(t) else (0, 0)
        return cls(t[order], x[order], y[order], p[order], sensor_size, beta, t_span)

    @classmethod
    def empty(cls, sensor_size: Tuple[int, int], beta: float, t_span: Tuple[int, int]) -> "EventStream":
        zeros = np.zeros(0, dtype=np.int64)
        return cls(zeros, zeros, zeros, zeros.astype(np.int8), sensor_size, beta, t_span)

    @classmethod
    def from_events(
        cls, events: Sequence[Event], sensor_size: Tuple[int, int], beta: float,
        t_span: Optional[Tuple[int, int]] = None,
    ) -> "EventStream":
        return cls.build(
            [e.t for e in events], [e.x for e in events], [e.y for e in events],
            [e.p for e in events], sensor_size, beta, t_span,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.t, self.x, self.y, self.p):
            yield Event(int(t), int(x), int(y), int(p))

    @property
    def width(self) -> int:
        return self.sensor_size[0]

    @property
    def height(self) -> int:
        return self.sensor_size[1]

    @property
    def duration(self) -> int:
        return self.t_span[1] - self.t_span[0]

    def window_mask(self, t1: int, t2: int) -> np.ndarray:
        return (self.t >= t1) & (self.t < t2)

    def slice(self, t1: int, t2: int) -> "EventStream":
        """Events in [t1, t2) with t_span set to that window"""
        if t2 < t1:
            raise InputError(f"window end {t2} precedes start {t1}")
        lo = int(np.searchsorted(self.t, t1, side="left"))
        hi = int(np.searchsorted(self.t, t2, side="left"))
        return EventStream(
            self.t[lo:hi], self.x[lo:hi], self.y[lo:hi], self.p[lo:hi],
            self.sensor_size, self.beta, (t1, t2),
        )

    def shift(self, offset: int) -> "EventStream":
        return EventStream(
            self.t + offset, self.x, self.y, self.p, self.sensor_size, self.beta,
            (self.t_span[0] + offset, self.t_span[1] + offset),
        )

    def polarity_sum(self) -> int:
        return int(self.p.astype(np.int64).sum())

    def net_counts(self, t1: int, t2: int) -> np.ndarray:
        """Per-pixel signed event count in [t1, t2) as an H x W int64 plane"""
        mask = self.window_mask(t1, t2)
        flat = self.y[mask] * self.width + self.x[mask]
        counts = np.bincount(
            flat, weights=self.p[mask].astype(np.float64), minlength=self.width * self.height
        )
        return np.rint(counts).astype(np.int64).reshape(self.height, self.width)


def simulate_from_log(
    log_frames: np.ndarray, timestamps: np.ndarray, beta: float
) -> EventStream:
    """Quantize a log-intensity trajectory into events (reference carry-over)"""
    log_frames = np.asarray(log_frames, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if log_frames.ndim != 3 or len(log_frames) < 2:
        raise InputError("event simulation needs at least two H x W frames")
    if len(timestamps) != len(log_frames):
        raise InputError("one timestamp per frame is required")
    if np.any(np.diff(timestamps) <= 0):
        raise InputError("frame timestamps must be strictly increasing")
    if beta <= 0:
        raise InputError(f"contrast threshold must be positive, got {beta}")

    height, width = log_frames.shape[1:]
    reference = log_frames[0].copy()
    columns = {"t": [], "pix": [], "p": []}

    for i in range(1, len(log_frames)):
        l_a, l_b = log_frames[i - 1], log_frames[i]
        t_a, t_b = int(timestamps[i - 1]), int(timestamps[i])
        delta = l_b - reference
        counts = np.floor(np.abs(delta) / beta + _QUANT_EPS).astype(np.int64)
        sign = np.sign(delta)

        fired = np.flatnonzero(counts)
        if fired.size:
            per_pixel = counts.flat[fired]
            pix = np.repeat(fired, per_pixel)
            starts = np.repeat(np.cumsum(per_pixel) - per_pixel, per_pixel)
            crossing = np.arange(pix.size) - starts + 1
            polarity = sign.flat[pix]

            # crossing time along the linear log path between the two frames
            level = reference.flat[pix] + crossing * beta * polarity
            start, end = l_a.flat[pix], l_b.flat[pix]
            span = end - start
            safe = np.where(span == 0, 1.0, span)
            frac = np.clip(np.where(span == 0, 0.0, (level - start) / safe), 0.0, 1.0)
            ts = t_a + np.floor(frac * (t_b - t_a)).astype(np.int64)

            columns["t"].append(np.minimum(ts, t_b - 1))
            columns["pix"].append(pix)
            columns["p"].append(polarity.astype(np.int8))

        reference = reference + counts * beta * sign

    t_span = (int(timestamps[0]), int(timestamps[-1]))
    if not columns["t"]:
        return EventStream.empty((width, height), beta, t_span)

    pix = np.concatenate(columns["pix"])
    return EventStream.build(
        np.concatenate(columns["t"]), pix % width, pix // width,
        np.concatenate(columns["p"]), (width, height), beta, t_span,
    )


def simulate_events(
    seq: FrameSequence, beta: float = 0.2, log_floor: float = 1.0 / 255.0
) -> EventStream:
    """Generate the events a sensor with threshold beta would emit for seq"""
    if len(seq) < 2:
        raise InputError("event simulation needs at least two frames")
    log_frames = np.log(np.maximum(seq.luma(), log_floor))
    stream = simulate_from_log(log_frames, seq.timestamps, beta)
    logger.log_simulation(len(seq), len(stream), beta, stream.duration)
    return stream


def integrate_events(
    i1: np.ndarray, stream: EventStream, t1: int, t2: int
) -> np.ndarray:
    """Propagate intensity from t1 to t2: I2 = I1 * exp(beta * sum p), clamped to [0, 1]"""
    if t2 < t1:
        raise InputError(f"integration window end {t2} precedes start {t1}")
    i1 = np.asarray(i1, dtype=np.float64)
    if i1.shape[:2] != (stream.height, stream.width):
        raise DimensionError(
            f"plane {i1.shape[:2]} does not match sensor {(stream.height, stream.width)}"
        )
    gain = np.exp(stream.beta * stream.net_counts(t1, t2))
    if i1.ndim == 3:
        gain = gain[..., None]
    return np.clip(i1 * gain, 0.0, 1.0)
