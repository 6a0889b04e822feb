#!/usr/bin/env python3
"""
Exposure time-based event selection

Frame and event features are turned into group-normalized templates with C0
channels, correlated slot by slot (ReLU of the Hadamard product), fused
top-down across scales and reduced to a temporal activation map

    Z_0 = sigmoid(GAP(SFC({C_s})))          [B, T, C0, 1, 1]
    Z_s = replicate(Z_0, C_s^U channels)    nearest along channels

which gates every event feature slot: F(E)*_s = Z_s * F(E)_s. Z receives no
supervision of its own; it is trained only through the reconstruction loss.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
from torch import nn

from backend.app.core import tensor_ops
from backend.app.core.errors import DimensionError
from backend.app.models.encoders import FeaturePyramid
from backend.app.models.layers import Conv, GroupNorm


@dataclass
class TemplatePair:
    frame_template: torch.Tensor
    event_template: torch.Tensor


@dataclass
class TemporalActivationMap:
    """Z_s per scale, [B, T, C_s, 1, 1], entries in (0, 1)"""

    levels: List[torch.Tensor]

    @property
    def base(self) -> torch.Tensor:
        return self.levels[0]

    def slot_means(self) -> torch.Tensor:
        """[B, T] mean activation of each temporal slot at the base scale"""
        return self.base.mean(dim=(2, 3, 4))


class FramePreprocess(nn.Module):
    """1x1 compression to C0, replication over T slots, group norm"""

    def __init__(self, in_channels: int, template_channels: int, groups: int):
        super().__init__()
        self.compress = Conv(in_channels, template_channels, 1)
        self.norm = GroupNorm(template_channels, groups)

    def forward(self, frame_feats: torch.Tensor, T: int, normalize: bool = True) -> torch.Tensor:
        """frame_feats [B, 1, C_s, H, W] -> [B, T, C0, H, W]"""
        if frame_feats.dim() != 5 or frame_feats.shape[1] != 1:
            raise DimensionError(f"frame features must be [B,1,C,H,W], got {list(frame_feats.shape)}")
        compressed = self.compress(frame_feats[:, 0])
        template = compressed.unsqueeze(1).expand(-1, T, -1, -1, -1)
        if not normalize:
            return template
        return tensor_ops.time_distributed(self.norm, template.contiguous())


class EventPreprocess(nn.Module):
    """Siamese f_ref (1x1 conv, ReLU, 3x3 conv) shared by all slots, then group norm"""

    def __init__(self, in_channels: int, template_channels: int, groups: int):
        super().__init__()
        self.reduce = Conv(in_channels, template_channels, 1)
        self.refine = Conv(template_channels, template_channels, 3)
        self.norm = GroupNorm(template_channels, groups)

    def f_ref(self, x: torch.Tensor) -> torch.Tensor:
        return self.refine(torch.relu(self.reduce(x)))

    def forward(self, event_feats: torch.Tensor, normalize: bool = True) -> torch.Tensor:
        """event_feats [B, T, C_s^U, H, W] -> [B, T, C0, H, W]"""
        template = tensor_ops.time_distributed(self.f_ref, event_feats)
        if not normalize:
            return template
        return tensor_ops.time_distributed(self.norm, template)


def correlate(pair: TemplatePair) -> torch.Tensor:
    """ReLU(event template * frame template)"""
    if pair.frame_template.shape != pair.event_template.shape:
        raise DimensionError(
            f"template shapes differ: {list(pair.frame_template.shape)} vs {list(pair.event_template.shape)}"
        )
    return torch.relu(pair.event_template * pair.frame_template)


class ScaleFusion(nn.Module):
    """Top-down fusion of per-scale correlations into Z_0"""

    def __init__(self, channels: int, num_scales: int = 3):
        super().__init__()
        self.convs = nn.ModuleList([Conv(channels, channels, 3) for _ in range(num_scales)])

    def forward(self, correlations: Sequence[torch.Tensor]) -> torch.Tensor:
        if len(correlations) != len(self.convs):
            raise DimensionError(f"expected {len(self.convs)} correlation scales, got {len(correlations)}")
        x = tensor_ops.time_distributed(self.convs[-1], correlations[-1])
        for s in range(len(correlations) - 2, -1, -1):
            size = tuple(correlations[s].shape[-2:])
            up = tensor_ops.time_distributed(lambda t: tensor_ops.upsample_bilinear(t, size), x)
            x = tensor_ops.time_distributed(self.convs[s], correlations[s] + up)
        return torch.sigmoid(tensor_ops.gap(x))


def expand_activation(z0: torch.Tensor, channels: Sequence[int]) -> TemporalActivationMap:
    return TemporalActivationMap([tensor_ops.replicate_channels(z0, c, dim=2) for c in channels])


def select(pyramid: FeaturePyramid, Z: TemporalActivationMap) -> FeaturePyramid:
    """Channel-wise gating per (slot, channel)"""
    if len(pyramid) != len(Z.levels):
        raise DimensionError(f"{len(pyramid)} feature scales vs {len(Z.levels)} activation scales")
    return FeaturePyramid([z * f for z, f in zip(Z.levels, pyramid.levels)])


class ETES(nn.Module):
    """Template pre-processing, correlation, scale fusion and selection"""

    def __init__(
        self,
        frame_channels: Sequence[int] = (16, 32, 64),
        event_channels: Sequence[int] = (8, 16, 32),
        groups: int = 4,
    ):
        super().__init__()
        self.event_channels = list(event_channels)
        template = event_channels[0]
        self.frame_pre = nn.ModuleList([FramePreprocess(c, template, groups) for c in frame_channels])
        self.event_pre = nn.ModuleList([EventPreprocess(c, template, groups) for c in event_channels])
        self.sfc = ScaleFusion(template, len(event_channels))

    def templates(self, frame: FeaturePyramid, events: FeaturePyramid) -> List[TemplatePair]:
        T = events.T
        return [
            TemplatePair(fp(frame[s], T), ep(events[s]))
            for s, (fp, ep) in enumerate(zip(self.frame_pre, self.event_pre))
        ]

    def activation(self, frame: FeaturePyramid, events: FeaturePyramid) -> TemporalActivationMap:
        correlations = [correlate(pair) for pair in self.templates(frame, events)]
        return expand_activation(self.sfc(correlations), self.event_channels)

    def forward(
        self, frame: FeaturePyramid, events: FeaturePyramid
    ) -> Tuple[FeaturePyramid, TemporalActivationMap]:
        Z = self.activation(frame, events)
        return select(events, Z), Z


def unit_activation(events: FeaturePyramid) -> TemporalActivationMap:
    """Z = 1 everywhere, used when selection is disabled"""
    return TemporalActivationMap([torch.ones_like(level[..., :1, :1]) for level in events.levels])
