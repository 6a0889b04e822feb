#!/usr/bin/env python3
"""
Frame/event feature fusion

Per scale, selected event features are projected to the frame channel count
and added to the (temporally broadcast) frame features to calibrate them.
From the calibrated features come a channel attention Att(C) and a spatial
attention Att(S); the event features generate per-pixel k x k filters K.
The frame branch is then

    F~(B) = F(B) + Att(C) * F(B) + Att(S) * F(B) + K (*) F(B)

the event branch only gets spatial attention, and a 1x1 conv merges the two.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from backend.app.core import tensor_ops
from backend.app.core.errors import DimensionError
from backend.app.models.encoders import FeaturePyramid
from backend.app.models.layers import ChannelAttention, Conv, SpatialAttention


@dataclass
class ForcedAttention:
    """Overrides for Att(C) [B,T,C,1,1], Att(S) [B,T,1,H,W] and K [B,T,C*k*k,H,W]"""

    att_c: Optional[torch.Tensor] = None
    att_s: Optional[torch.Tensor] = None
    kernels: Optional[torch.Tensor] = None


def filter_frame(
    frame: torch.Tensor,
    att_c: torch.Tensor,
    att_s: torch.Tensor,
    kernels: torch.Tensor,
    kernel_size: int = 5,
) -> torch.Tensor:
    """F~(B) for [B, T, C, H, W] frame features; linear in `frame` for fixed attention and filters"""
    filtered = tensor_ops.time_distributed(
        lambda x: tensor_ops.dynamic_conv(x[:, : frame.shape[2]], x[:, frame.shape[2]:], kernel_size),
        torch.cat([frame, kernels], dim=2),
    )
    return frame + att_c * frame + att_s * frame + filtered


class FusionBlock(nn.Module):
    """Attention and dynamic-filter fusion at one scale"""

    def __init__(self, frame_channels: int, event_channels: int, kernel_size: int = 5):
        super().__init__()
        self.kernel_size = kernel_size
        self.align = Conv(event_channels, frame_channels, 1)
        self.channel_att = ChannelAttention(frame_channels)
        self.spatial_att = SpatialAttention()
        self.event_att = SpatialAttention()
        self.filter1 = Conv(frame_channels, frame_channels, 3)
        self.filter2 = Conv(frame_channels, frame_channels * kernel_size * kernel_size, 3)
        self.merge = Conv(2 * frame_channels, frame_channels, 1)

    def f_filter(self, x: torch.Tensor) -> torch.Tensor:
        return self.filter2(torch.relu(self.filter1(x)))

    def forward(
        self, frame: torch.Tensor, events: torch.Tensor, forced: Optional[ForcedAttention] = None
    ) -> torch.Tensor:
        """frame [B, 1, C, H, W], events [B, T, C^U, H, W] -> F_s [B, T, C, H, W]"""
        if frame.dim() != 5 or events.dim() != 5:
            raise DimensionError("fusion inputs must be [B,T,C,H,W]")
        if frame.shape[0] != events.shape[0] or frame.shape[-2:] != events.shape[-2:]:
            raise DimensionError(
                f"frame {list(frame.shape)} and event {list(events.shape)} features do not align"
            )
        forced = forced or ForcedAttention()
        T = events.shape[1]
        aligned = tensor_ops.time_distributed(self.align, events)
        frame_t = frame.expand(-1, T, -1, -1, -1)
        calibrated = frame_t + aligned

        att_c = forced.att_c if forced.att_c is not None else tensor_ops.time_distributed(self.channel_att, calibrated)
        att_s = forced.att_s if forced.att_s is not None else tensor_ops.time_distributed(self.spatial_att, calibrated)
        kernels = forced.kernels if forced.kernels is not None else tensor_ops.time_distributed(self.f_filter, aligned)

        frame_out = filter_frame(frame_t, att_c, att_s, kernels, self.kernel_size)
        event_out = aligned * tensor_ops.time_distributed(self.event_att, aligned)
        return tensor_ops.time_distributed(self.merge, torch.cat([frame_out, event_out], dim=2))


class ConcatFusion(nn.Module):
    """Plain concatenation + 1x1 conv"""

    def __init__(self, frame_channels: int, event_channels: int):
        super().__init__()
        self.merge = Conv(frame_channels + event_channels, frame_channels, 1)

    def forward(
        self, frame: torch.Tensor, events: torch.Tensor, forced: Optional[ForcedAttention] = None
    ) -> torch.Tensor:
        frame_t = frame.expand(-1, events.shape[1], -1, -1, -1)
        return tensor_ops.time_distributed(self.merge, torch.cat([frame_t, events], dim=2))


class FeatureFusion(nn.Module):
    """One fusion block per scale"""

    def __init__(
        self,
        frame_channels: Sequence[int],
        event_channels: Sequence[int],
        kernel_size: int = 5,
        use_fusion: bool = True,
    ) -> None:
        super().__init__()
        if use_fusion:
            blocks = [FusionBlock(c, u, kernel_size) for c, u in zip(frame_channels, event_channels)]
        else:
            blocks = [ConcatFusion(c, u) for c, u in zip(frame_channels, event_channels)]
        self.blocks = nn.ModuleList(blocks)

    def forward(self, frame: FeaturePyramid, events: FeaturePyramid) -> List[torch.Tensor]:
        return [block(frame[s], events[s]) for s, block in enumerate(self.blocks)]
