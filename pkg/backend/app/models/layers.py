#!/usr/bin/env python3
"""
Parameterized building blocks over the tensor primitives

Weights use uniform fan-in scaling, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), and
biases start at zero, so an all-zero input gives an all-zero output for any
block without a constant term.
"""

import math
from typing import Optional

import torch
from torch import nn

from backend.app.core import tensor_ops


class Conv(nn.Module):
    """Square-kernel convolution with 'same' padding (before striding)"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        bound = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        nn.init.uniform_(self.weight, -bound, bound)

    @property
    def in_channels(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_channels(self) -> int:
        return int(self.weight.shape[0])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return tensor_ops.conv2d(x, self.weight, self.bias, stride=self.stride)


class ConvBlock(nn.Module):
    """Two 3x3 conv + ReLU; the first conv carries the stride"""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = Conv(in_channels, out_channels, 3, stride)
        self.conv2 = Conv(out_channels, out_channels, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.conv2(torch.relu(self.conv1(x))))


class GroupNorm(nn.Module):
    """Group normalization with an optional learned affine"""

    def __init__(self, channels: int, groups: int, affine: bool = True, eps: float = 1e-5):
        super().__init__()
        self.groups = groups
        self.eps = eps
        self.weight: Optional[nn.Parameter] = nn.Parameter(torch.ones(channels)) if affine else None
        self.bias: Optional[nn.Parameter] = nn.Parameter(torch.zeros(channels)) if affine else None

    def forward(self, x: torch.Tensor, affine: bool = True) -> torch.Tensor:
        if affine:
            return tensor_ops.group_norm(x, self.groups, self.eps, self.weight, self.bias)
        return tensor_ops.group_norm(x, self.groups, self.eps)


class SpatialAttention(nn.Module):
    """sigmoid(7x7 conv over the channel-wise mean and max)"""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = Conv(2, 1, kernel_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=-3, keepdim=True), x.amax(dim=-3, keepdim=True)], dim=-3)
        return torch.sigmoid(self.conv(pooled))


class ChannelAttention(nn.Module):
    """sigmoid(FC(ReLU(FC(GAP(x))))) with reduction ratio 2, as 1x1 convs"""

    def __init__(self, channels: int, reduction: int = 2):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = Conv(channels, hidden, 1)
        self.fc2 = Conv(hidden, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc2(torch.relu(self.fc1(tensor_ops.gap(x)))))
