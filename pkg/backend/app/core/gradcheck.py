#!/usr/bin/env python3
"""
Finite-difference gradient checker

Compares the autograd gradient of a scalar function with central
differences, either coordinate by coordinate or along seeded random
directions (preferred for composed blocks, where ReLU kinks make
per-coordinate probing brittle).
"""

from typing import Callable, Dict, List, Literal, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field
from torch.func import functional_call

from backend.app.core.errors import ConfigError, DimensionError, NonFiniteError


class GradCheckReport(BaseModel):
    """Outcome of one gradient check"""

    passed: bool = Field(..., description="True iff max_rel_error <= tol and no failure")
    max_rel_error: float = Field(..., ge=0)
    max_abs_error: float = Field(..., ge=0)
    worst_check: Optional[int] = Field(None, description="Coordinate or direction index of the worst error")
    n_checks: int = Field(..., ge=0)
    mode: str
    h: float = Field(..., gt=0)
    tol: float = Field(..., gt=0)
    failure: Optional[str] = Field(None, description="Set when evaluation itself failed")

    model_config = ConfigDict(extra="forbid")


def _scalar(f: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    y = f(x)
    if y.numel() != 1:
        raise DimensionError(f"grad_check needs a scalar function, got shape {list(y.shape)}")
    return y.reshape(())


def grad_check(
    f: Callable[[torch.Tensor], torch.Tensor],
    point: torch.Tensor,
    h: float = 1e-5,
    tol: float = 1e-6,
    mode: Literal["entries", "directions"] = "entries",
    max_checks: Optional[int] = None,
    seed: int = 0,
    denom_floor: float = 1e-3,
) -> GradCheckReport:
    """Central-difference check of d f / d point"""
    if point.dtype != torch.float64:
        raise ConfigError("grad_check requires a float64 point")
    if mode not in ("entries", "directions"):
        raise ConfigError(f"unknown grad_check mode: {mode}")

    generator = torch.Generator().manual_seed(seed)
    x = point.detach().clone().requires_grad_(True)

    try:
        y = _scalar(f, x)
        (analytic,) = torch.autograd.grad(y, x, allow_unused=True)
    except NonFiniteError as e:
        return GradCheckReport(
            passed=False, max_rel_error=0.0, max_abs_error=0.0, n_checks=0,
            mode=mode, h=h, tol=tol, failure=f"forward: {e.message} {e.details}",
        )
    if analytic is None:
        analytic = torch.zeros_like(x)
    analytic = analytic.detach()
    base = x.detach()

    if mode == "entries":
        count = base.numel()
        if max_checks is not None and max_checks < count:
            checks = torch.randperm(count, generator=generator)[:max_checks].tolist()
        else:
            checks = list(range(count))
    else:
        checks = list(range(max_checks if max_checks is not None else 10))

    max_rel = 0.0
    max_abs = 0.0
    worst: Optional[int] = None
    for check in checks:
        if mode == "entries":
            direction = torch.zeros_like(base)
            direction.view(-1)[check] = 1.0
        else:
            direction = torch.randn(base.shape, generator=generator, dtype=base.dtype)
            direction = direction / direction.norm()

        try:
            with torch.no_grad():
                f_plus = _scalar(f, base + h * direction).item()
                f_minus = _scalar(f, base - h * direction).item()
        except NonFiniteError as e:
            return GradCheckReport(
                passed=False, max_rel_error=max_rel, max_abs_error=max_abs,
                worst_check=check, n_checks=len(checks), mode=mode, h=h, tol=tol,
                failure=f"check {check}: {e.message} {e.details}",
            )

        numeric = (f_plus - f_minus) / (2.0 * h)
        exact = float((analytic * direction).sum())
        abs_err = abs(numeric - exact)
        rel_err = abs_err / max(abs(numeric), abs(exact), denom_floor)
        max_abs = max(max_abs, abs_err)
        if worst is None or rel_err > max_rel:
            max_rel = rel_err
            worst = check

    return GradCheckReport(
        passed=max_rel <= tol,
        max_rel_error=max_rel,
        max_abs_error=max_abs,
        worst_check=worst,
        n_checks=len(checks),
        mode=mode,
        h=h,
        tol=tol,
    )


def parameter_grad_check(
    module: torch.nn.Module,
    loss_fn: Callable[[torch.nn.Module, Dict[str, torch.Tensor]], torch.Tensor],
    **kwargs,
) -> GradCheckReport:
    """
    grad_check over all trainable parameters of a module, flattened.

    loss_fn receives the module and a name -> tensor parameter mapping and
    must evaluate the module through torch.func.functional_call with it.
    """
    names: List[str] = []
    shapes: List[torch.Size] = []
    flats: List[torch.Tensor] = []
    for name, param in module.named_parameters():
        if param.requires_grad:
            names.append(name)
            shapes.append(param.shape)
            flats.append(param.detach().reshape(-1))
    if not flats:
        raise ConfigError("module has no trainable parameters")
    point = torch.cat(flats)

    def f(vector: torch.Tensor) -> torch.Tensor:
        params: Dict[str, torch.Tensor] = {}
        offset = 0
        for name, shape in zip(names, shapes):
            size = int(torch.Size(shape).numel())
            params[name] = vector[offset:offset + size].view(shape)
            offset += size
        return loss_fn(module, params)

    return grad_check(f, point, **kwargs)


def call_with(module: torch.nn.Module, params: Dict[str, torch.Tensor], *args, **kwargs):
    """Evaluate a module with substituted parameters"""
    return functional_call(module, params, args, kwargs)
