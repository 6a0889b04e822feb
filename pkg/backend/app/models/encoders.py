#!/usr/bin/env python3
"""
Feature encoders

- FrameEncoder: blurred frame -> 3-scale pyramid, temporal dim 1
- PastEventEncoder: voxel grid of the previous shutter period -> 3-scale pyramid, temporal dim 1
- RecurrentEventEncoder: current-period temporal units, one shared-weight
  recurrent pass per unit with the hidden state living at scale 1:

    F0 = f1(E_n)
    F1 = f2(F0, h_{n-1})
    h_n = fh(F1)
    F2 = f3(F1)

Pyramids are batched, [B, T, C_s, H_s, W_s], with H_{s+1} = H_s / 2.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
from torch import nn

from backend.app.core.errors import DimensionError, InputError
from backend.app.models.layers import Conv, ConvBlock


@dataclass
class FeaturePyramid:
    levels: List[torch.Tensor]

    def __post_init__(self):
        for s, level in enumerate(self.levels):
            if level.dim() != 5:
                raise DimensionError(f"pyramid level {s} must be [B,T,C,H,W], got {list(level.shape)}")
        for s in range(1, len(self.levels)):
            coarse, fine = self.levels[s].shape[-2:], self.levels[s - 1].shape[-2:]
            if coarse[0] * 2 != fine[0] or coarse[1] * 2 != fine[1]:
                raise DimensionError(f"scale {s} is not half of scale {s - 1}: {list(coarse)} vs {list(fine)}")

    @property
    def T(self) -> int:
        return int(self.levels[0].shape[1])

    @property
    def channels(self) -> List[int]:
        return [int(level.shape[2]) for level in self.levels]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, s: int) -> torch.Tensor:
        return self.levels[s]


@dataclass
class RnnState:
    hidden: torch.Tensor
    step: int = 0


class PyramidEncoder(nn.Module):
    """Three ConvBlocks; scales 1 and 2 downsample by 2"""

    def __init__(self, in_channels: int, channels: Sequence[int]):
        super().__init__()
        c0, c1, c2 = channels
        self.level0 = ConvBlock(in_channels, c0)
        self.level1 = ConvBlock(c0, c1, stride=2)
        self.level2 = ConvBlock(c1, c2, stride=2)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        if x.dim() != 4:
            raise DimensionError(f"encoder input must be [B,C,H,W], got {list(x.shape)}")
        f0 = self.level0(x)
        f1 = self.level1(f0)
        f2 = self.level2(f1)
        return FeaturePyramid([f.unsqueeze(1) for f in (f0, f1, f2)])


class FrameEncoder(PyramidEncoder):
    """Blurred-frame encoder, C_s = {16, 32, 64} by default"""

    def __init__(self, image_channels: int = 1, channels: Sequence[int] = (16, 32, 64)):
        super().__init__(image_channels, channels)


class PastEventEncoder(PyramidEncoder):
    """2-D CNN over the previous period's voxel grid"""

    def __init__(self, voxel_bins: int = 16, channels: Sequence[int] = (8, 16, 32)):
        super().__init__(voxel_bins, channels)


class RecurrentEventEncoder(nn.Module):
    """
    Shared-weight encoder over current-period units.

    With recurrent=False the hidden state is dropped and every unit goes
    through the same feedforward 2-D CNN.
    """

    def __init__(
        self,
        channels: Sequence[int] = (8, 16, 32),
        hidden_channels: int = 16,
        recurrent: bool = True,
        unit_channels: int = 2,
    ):
        super().__init__()
        c0, c1, c2 = channels
        self.recurrent = recurrent
        self.hidden_channels = hidden_channels
        self.f1 = ConvBlock(unit_channels, c0)
        # f2: downsample F0, then merge with the hidden state at scale 1
        self.f2_down = Conv(c0, c1, 3, stride=2)
        self.f2_merge = Conv(c1 + (hidden_channels if recurrent else 0), c1, 3)
        self.fh = ConvBlock(c1, hidden_channels) if recurrent else None
        self.f3 = ConvBlock(c1, c2, stride=2)

    def initial_state(self, unit: torch.Tensor) -> RnnState:
        b, _, h, w = unit.shape
        hidden = unit.new_zeros(b, self.hidden_channels, (h + 1) // 2, (w + 1) // 2)
        return RnnState(hidden, 0)

    def step(
        self, unit: torch.Tensor, state: Optional[RnnState]
    ) -> Tuple[Tuple[torch.Tensor, torch.Tensor, torch.Tensor], Optional[RnnState]]:
        f0 = self.f1(unit)
        down = torch.relu(self.f2_down(f0))
        if self.recurrent:
            down = torch.cat([down, state.hidden], dim=1)
        f1 = torch.relu(self.f2_merge(down))
        new_state = RnnState(self.fh(f1), state.step + 1) if self.recurrent else None
        f2 = self.f3(f1)
        return (f0, f1, f2), new_state

    def forward(
        self, units: torch.Tensor, unit_times: Optional[Sequence[float]] = None
    ) -> Tuple[FeaturePyramid, Optional[RnnState]]:
        """units: [B, N, 2, H, W] in temporal order; the state starts at zero for every call"""
        if units.dim() != 5:
            raise DimensionError(f"units must be [B,N,2,H,W], got {list(units.shape)}")
        if unit_times is not None:
            times = list(unit_times)
            if len(times) != units.shape[1]:
                raise InputError(f"{len(times)} unit times for {units.shape[1]} units")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InputError("event units are not in temporal order")

        state = self.initial_state(units[:, 0]) if self.recurrent else None
        per_scale: List[List[torch.Tensor]] = [[], [], []]
        for n in range(units.shape[1]):
            feats, state = self.step(units[:, n], state)
            for s, f in enumerate(feats):
                per_scale[s].append(f)
        return FeaturePyramid([torch.stack(fs, dim=1) for fs in per_scale]), state


def assemble_event_pyramid(past: FeaturePyramid, current: FeaturePyramid) -> FeaturePyramid:
    """Past features at slot 0, current units at slots 1..N"""
    if len(past) != len(current):
        raise DimensionError(f"{len(past)} past scales vs {len(current)} current scales")
    levels = []
    for s, (p, c) in enumerate(zip(past.levels, current.levels)):
        if p.shape[0] != c.shape[0] or p.shape[2:] != c.shape[2:]:
            raise DimensionError(
                f"scale {s}: past {list(p.shape)} and current {list(c.shape)} do not concatenate"
            )
        levels.append(torch.cat([p, c], dim=1))
    return FeaturePyramid(levels)
