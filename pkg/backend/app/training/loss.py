#!/usr/bin/env python3
"""
Multi-scale Charbonnier objective

    L = sum_s lambda_s * mean( sqrt((O_gt,s - O_s)^2 + eps^2) )

Ground truths for the coarser scales are 2x2 average-pooled from the full
resolution target.
"""

from typing import List, Sequence, Set, Union

import torch
import torch.nn.functional as F

from backend.app.core.errors import DimensionError
from backend.app.models.decoder import MultiScaleOutput


def target_pyramid(sharp: torch.Tensor, num_scales: int = 3) -> List[torch.Tensor]:
    """[B, C, H, W] -> finest-first list of average-pooled targets"""
    levels = [sharp]
    for _ in range(num_scales - 1):
        levels.append(F.avg_pool2d(levels[-1], kernel_size=2))
    return levels


def charbonnier_loss(
    outputs: Union[MultiScaleOutput, Sequence[torch.Tensor]],
    targets: Sequence[torch.Tensor],
    lambdas: Sequence[float] = (1.0, 0.1, 0.1),
    eps: float = 1e-3,
) -> torch.Tensor:
    outs = outputs.outputs if isinstance(outputs, MultiScaleOutput) else list(outputs)
    if not (len(outs) == len(targets) == len(lambdas)):
        raise DimensionError(
            f"{len(outs)} outputs, {len(targets)} targets and {len(lambdas)} weights"
        )
    total = outs[0].new_zeros(())
    for s, (o, gt, lam) in enumerate(zip(outs, targets, lambdas)):
        if o.shape != gt.shape:
            raise DimensionError(f"scale {s}: output {list(o.shape)} vs target {list(gt.shape)}")
        total = total + lam * torch.sqrt((gt - o) ** 2 + eps * eps).mean()
    return total


def graph_leaves(loss: torch.Tensor) -> List[torch.Tensor]:
    """Every leaf tensor the loss back-propagates into"""
    leaves: Set[int] = set()
    found: List[torch.Tensor] = []
    seen: Set[int] = set()
    stack = [loss.grad_fn]
    while stack:
        node = stack.pop()
        if node is None or id(node) in seen:
            continue
        seen.add(id(node))
        variable = getattr(node, "variable", None)
        if variable is not None and id(variable) not in leaves:
            leaves.add(id(variable))
            found.append(variable)
        stack.extend(next_fn for next_fn, _ in node.next_functions)
    return found
