#!/usr/bin/env python3
"""
Blur formation and the closed-form event-based deblurring model

A blurred frame is the mean of the latent frames sampled over its exposure.
Writing every latent as L_i = I * R_i, with R_i = exp(beta * signed count
between the anchor time and sample time i), gives B = I * S with
S = mean_i R_i, so the anchor latent is recovered as I = B / S.
"""

from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from backend.app.core.errors import DimensionError, InputError, InvariantViolation
from backend.app.physics.events import EventStream
from backend.app.physics.frames import FrameSequence


@dataclass(frozen=True, eq=False)
class ResidualSum:
    """Per-pixel mean of event-derived brightness ratios"""

    S: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.S, dtype=np.float64)
        if s.ndim != 2:
            raise DimensionError(f"residual sum must be an H x W plane, got {s.shape}")
        object.__setattr__(self, "S", s)

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.S > 0))


def synthesize_blur(latents: Union[FrameSequence, Sequence[np.ndarray], np.ndarray]) -> np.ndarray:
    """Per-pixel arithmetic mean of the latent frames"""
    frames = latents.frames if isinstance(latents, FrameSequence) else latents
    if len(frames) == 0:
        raise InputError("blur synthesis needs at least one frame")
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim not in (3, 4):
        raise DimensionError(f"expected a stack of planes, got shape {stack.shape}")
    return stack.mean(axis=0)


def _signed_counts(stream: EventStream, anchor: int, tau: int) -> np.ndarray:
    if tau >= anchor:
        return stream.net_counts(anchor, tau)
    return -stream.net_counts(tau, anchor)


def residual_sum(stream: EventStream, anchor: int, sample_times: Sequence[int]) -> ResidualSum:
    """S = (1/N) sum_i exp(beta * signed count between anchor and tau_i)"""
    if len(sample_times) == 0:
        raise InputError("residual sum needs at least one sample time")
    t_start, t_end = stream.t_span
    for tau in list(sample_times) + [anchor]:
        if tau < t_start or tau > t_end:
            raise InputError(f"time {tau} lies outside the stream span {stream.t_span}")

    total = np.zeros((stream.height, stream.width), dtype=np.float64)
    for tau in sample_times:
        total += np.exp(stream.beta * _signed_counts(stream, anchor, int(tau)))
    return ResidualSum(total / len(sample_times))


def edi_deblur(blur: np.ndarray, S: ResidualSum) -> np.ndarray:
    """I = B / S clamped to [0, 1]; RGB blur gets the same per-pixel gain on every channel"""
    blur = np.asarray(blur, dtype=np.float64)
    if not S.is_positive:
        raise InvariantViolation("residual sum has non-positive entries")
    if blur.shape[:2] != S.S.shape:
        raise DimensionError(f"blur {blur.shape[:2]} and residual sum {S.S.shape} differ")
    gain = 1.0 / S.S
    if blur.ndim == 3:
        gain = gain[..., None]
    return np.clip(blur * gain, 0.0, 1.0)


def edi_latent_sequence(
    sharp: np.ndarray, stream: EventStream, anchor: int, sample_times: Sequence[int]
) -> List[np.ndarray]:
    """Re-synthesize the latent frame at each sample time from the deblurred anchor"""
    sharp = np.asarray(sharp, dtype=np.float64)
    latents = []
    for tau in sample_times:
        ratio = np.exp(stream.beta * _signed_counts(stream, anchor, int(tau)))
        if sharp.ndim == 3:
            ratio = ratio[..., None]
        latents.append(np.clip(sharp * ratio, 0.0, 1.0))
    return latents
