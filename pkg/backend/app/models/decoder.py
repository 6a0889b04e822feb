#!/usr/bin/env python3
"""
Coarse-to-fine decoder

The fused features of each scale are averaged over their temporal slots,
decoded from the coarsest scale up, and every scale emits a restored frame
built on the upsampled coarser output:

    g_2 = D_2(F_2)                 O_2 = head_2(g_2)
    g_s = D_s(F_s + P_s(up(g_s+1)))  O_s = head_s(g_s) + up(O_s+1)
"""

from dataclasses import dataclass
from typing import List, Sequence

import torch
from torch import nn

from backend.app.core import tensor_ops
from backend.app.core.errors import DimensionError
from backend.app.models.layers import Conv, ConvBlock


@dataclass
class MultiScaleOutput:
    """Restored frames [B, C, H_s, W_s], finest first; unclamped"""

    outputs: List[torch.Tensor]

    def __getitem__(self, s: int) -> torch.Tensor:
        return self.outputs[s]

    def __len__(self) -> int:
        return len(self.outputs)

    def clamped(self) -> List[torch.Tensor]:
        return [o.clamp(0.0, 1.0) for o in self.outputs]


class Decoder(nn.Module):
    def __init__(self, channels: Sequence[int] = (16, 32, 64), image_channels: int = 1):
        super().__init__()
        self.blocks = nn.ModuleList([ConvBlock(c, c) for c in channels])
        self.lateral = nn.ModuleList([Conv(channels[s + 1], channels[s], 1) for s in range(len(channels) - 1)])
        self.heads = nn.ModuleList([Conv(c, image_channels, 3) for c in channels])

    def forward(self, fused: Sequence[torch.Tensor]) -> MultiScaleOutput:
        if len(fused) != len(self.blocks):
            raise DimensionError(f"decoder expects {len(self.blocks)} scales, got {len(fused)}")
        feats = [f.mean(dim=1) if f.dim() == 5 else f for f in fused]

        top = len(feats) - 1
        g = self.blocks[top](feats[top])
        out = self.heads[top](g)
        outputs = [out]
        for s in range(top - 1, -1, -1):
            size = tuple(feats[s].shape[-2:])
            g = self.blocks[s](feats[s] + self.lateral[s](tensor_ops.upsample_bilinear(g, size)))
            out = self.heads[s](g) + tensor_ops.upsample_bilinear(out, size)
            outputs.insert(0, out)
        return MultiScaleOutput(outputs)
