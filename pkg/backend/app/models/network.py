#!/usr/bin/env python3
"""
End-to-end event-guided deblurring network

blur [B, C, H, W], past voxel grid [B, bins, H, W] and current units
[B, N, 2, H, W] -> multi-scale restored frames plus the temporal activation
map. H and W must be divisible by 4.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import torch
from torch import nn

from backend.app.core.config import ModelConfig
from backend.app.core.errors import DimensionError
from backend.app.models.decoder import Decoder, MultiScaleOutput
from backend.app.models.encoders import (
    FrameEncoder,
    PastEventEncoder,
    RecurrentEventEncoder,
    assemble_event_pyramid,
)
from backend.app.models.etes import ETES, TemporalActivationMap, unit_activation
from backend.app.models.fusion import FeatureFusion


@dataclass
class NetworkOutput:
    outputs: MultiScaleOutput
    activation: TemporalActivationMap


class DeblurNet(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        self.frame_encoder = FrameEncoder(cfg.image_channels, cfg.frame_channels)
        self.past_encoder = PastEventEncoder(cfg.voxel_bins, cfg.event_channels)
        self.event_encoder = RecurrentEventEncoder(
            cfg.event_channels, cfg.hidden_channels, recurrent=cfg.use_recurrent_encoding
        )
        self.etes = ETES(cfg.frame_channels, cfg.event_channels, cfg.gn_groups) if cfg.use_etes else None
        self.fusion = FeatureFusion(
            cfg.frame_channels, cfg.event_channels, cfg.filter_kernel, use_fusion=cfg.use_fusion
        )
        self.decoder = Decoder(cfg.frame_channels, cfg.image_channels)

    def _check_inputs(self, blur: torch.Tensor, past_voxel: torch.Tensor, units: torch.Tensor) -> None:
        cfg = self.config
        if blur.dim() != 4 or blur.shape[1] != cfg.image_channels:
            raise DimensionError(f"blur must be [B,{cfg.image_channels},H,W], got {list(blur.shape)}")
        h, w = blur.shape[-2:]
        if h % 4 or w % 4:
            raise DimensionError(f"H and W must be divisible by 4, got {h}x{w}")
        if past_voxel.shape != (blur.shape[0], cfg.voxel_bins, h, w):
            raise DimensionError(f"past voxel grid has shape {list(past_voxel.shape)}")
        if units.shape != (blur.shape[0], cfg.num_units, 2, h, w):
            raise DimensionError(f"event units have shape {list(units.shape)}")

    def forward(self, blur: torch.Tensor, past_voxel: torch.Tensor, units: torch.Tensor) -> NetworkOutput:
        self._check_inputs(blur, past_voxel, units)
        frame = self.frame_encoder(blur)
        past = self.past_encoder(past_voxel)
        current, _ = self.event_encoder(units)
        events = assemble_event_pyramid(past, current)

        if self.etes is not None:
            selected, Z = self.etes(frame, events)
        else:
            selected, Z = events, unit_activation(events)

        fused = self.fusion(frame, selected)
        return NetworkOutput(self.decoder(fused), Z)


def predict(model: DeblurNet, arrays: Dict[str, np.ndarray]) -> NetworkOutput:
    """Inference on one unbatched sample (see training.dataset.sample_arrays)"""
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        inputs = [
            torch.from_numpy(np.ascontiguousarray(arrays[key])).to(dtype).unsqueeze(0)
            for key in ("blur", "past_voxel", "units")
        ]
        return model(*inputs)
