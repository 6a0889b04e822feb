#!/usr/bin/env python3
"""
Tensor primitives for the deblurring network

Thin, shape-checked wrappers over torch kernels. Every learned layer in the
network is composed from these, autograd records the compute graph, and any
non-finite output fails fast with the name of the primitive that produced it.

Inputs may be unbatched [C, H, W] or batched [B, C, H, W]; outputs keep the
rank of the input.
"""

from typing import Callable, Optional, Tuple

import torch
import torch.nn.functional as F

from backend.app.core.errors import ConfigError, DimensionError, NonFiniteError


def check_finite(tensor: torch.Tensor, where: str) -> torch.Tensor:
    """Raise NonFiniteError if the tensor holds NaN or Inf"""
    if not bool(torch.isfinite(tensor).all()):
        bad = (~torch.isfinite(tensor)).nonzero()
        first = bad[0].tolist() if bad.numel() else []
        raise NonFiniteError(
            where, {"shape": list(tensor.shape), "first_index": first}
        )
    return tensor


def _as_batch(x: torch.Tensor, name: str) -> Tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise DimensionError(
        f"{name} expects [C,H,W] or [B,C,H,W], got {list(x.shape)}"
    )


def _restore(x: torch.Tensor, squeezed: bool) -> torch.Tensor:
    return x.squeeze(0) if squeezed else x


def conv2d(
    input: torch.Tensor,
    kernel: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    stride: int = 1,
    padding: Optional[int] = None,
) -> torch.Tensor:
    """Cross-correlation with zero padding (k-1)/2 unless given"""
    x, squeezed = _as_batch(input, "conv2d")
    if kernel.dim() != 4:
        raise DimensionError(f"conv2d kernel must be 4-D, got {list(kernel.shape)}")
    c_out, c_in, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square with odd size, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise DimensionError(
            f"conv2d input has {x.shape[1]} channels, kernel expects {c_in}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias must be [{c_out}], got {list(bias.shape)}")
    pad = (kh - 1) // 2 if padding is None else padding

    out = F.conv2d(x, kernel, bias, stride=stride, padding=pad)
    return check_finite(_restore(out, squeezed), "conv2d")


def group_norm(
    input: torch.Tensor,
    groups: int,
    eps: float = 1e-5,
    weight: Optional[torch.Tensor] = None,
    bias: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Per-group zero mean, unit (biased) variance, optional affine"""
    x, squeezed = _as_batch(input, "group_norm")
    channels = x.shape[1]
    if groups < 1 or channels % groups != 0:
        raise ConfigError(f"group_norm: {groups} groups do not divide {channels} channels")

    out = F.group_norm(x, groups, weight, bias, eps)
    return check_finite(_restore(out, squeezed), "group_norm")


def gap(input: torch.Tensor) -> torch.Tensor:
    """Global average pooling over the two trailing spatial dims, kept as 1x1"""
    if input.dim() < 3:
        raise DimensionError(f"gap expects at least [C,H,W], got {list(input.shape)}")
    if input.shape[-1] < 1 or input.shape[-2] < 1:
        raise DimensionError("gap needs non-empty spatial dims")
    out = input.mean(dim=(-2, -1), keepdim=True)
    return check_finite(out, "gap")


def dynamic_conv(
    input: torch.Tensor, per_pixel_kernels: torch.Tensor, kernel_size: int = 5
) -> torch.Tensor:
    """
    Position-specific convolution.

    per_pixel_kernels holds C*k*k planes laid out channel-major, then the k*k
    window in row-major order; pixel (y, x) of channel c is filtered with its
    own window weights.
    """
    x, squeezed = _as_batch(input, "dynamic_conv")
    kernels, _ = _as_batch(per_pixel_kernels, "dynamic_conv kernels")
    k = kernel_size
    if k % 2 == 0:
        raise ConfigError(f"dynamic_conv kernel size must be odd, got {k}")

    b, c, h, w = x.shape
    if kernels.shape[0] != b or kernels.shape[-2:] != x.shape[-2:]:
        raise DimensionError(
            f"dynamic_conv kernels {list(kernels.shape)} do not match input {list(x.shape)}"
        )
    if kernels.shape[1] != c * k * k:
        raise DimensionError(
            f"dynamic_conv needs {c * k * k} kernel planes for {c} channels, got {kernels.shape[1]}"
        )

    patches = F.unfold(x, kernel_size=k, padding=k // 2).view(b, c, k * k, h, w)
    out = (patches * kernels.view(b, c, k * k, h, w)).sum(dim=2)
    return check_finite(_restore(out, squeezed), "dynamic_conv")


def upsample_bilinear(input: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Bilinear resize with align_corners=False"""
    x, squeezed = _as_batch(input, "upsample_bilinear")
    out = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
    return check_finite(_restore(out, squeezed), "upsample_bilinear")


def replicate_channels(input: torch.Tensor, channels: int, dim: int = -3) -> torch.Tensor:
    """Nearest-neighbour interpolation along the channel axis"""
    source = input.shape[dim]
    if channels < 1:
        raise ConfigError("replicate_channels needs a positive channel count")
    index = (torch.arange(channels, device=input.device) * source) // channels
    return input.index_select(dim, index)


def delta_kernels(
    channels: int,
    height: int,
    width: int,
    kernel_size: int = 5,
    dtype: torch.dtype = torch.float64,
) -> torch.Tensor:
    """Per-pixel kernels that make dynamic_conv the identity"""
    k2 = kernel_size * kernel_size
    kernels = torch.zeros(channels, k2, height, width, dtype=dtype)
    kernels[:, k2 // 2] = 1.0
    return kernels.view(channels * k2, height, width)


def time_distributed(
    fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor
) -> torch.Tensor:
    """Apply a [B,C,H,W] function to every slot of a [B,T,C,H,W] tensor"""
    if x.dim() != 5:
        raise DimensionError(f"expected [B,T,C,H,W], got {list(x.shape)}")
    b, t = x.shape[:2]
    out = fn(x.reshape(b * t, *x.shape[2:]))
    return out.reshape(b, t, *out.shape[1:])
