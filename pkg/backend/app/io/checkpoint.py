#!/usr/bin/env python3
"""
Checkpoint archives

A checkpoint is a zip holding `index.json` (name -> shape, dtype, plus free
metadata) and one TNSR entry per tensor. Entries carry a fixed timestamp and
are written in sorted order so the same parameters always give the same bytes.
"""

import json
import zipfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import CheckpointError, InputError
from backend.app.io.formats import decode_tnsr, encode_tnsr

logger = create_component_logger("checkpoint")

INDEX_NAME = "index.json"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(
    path: Union[str, Path],
    tensors: Dict[str, torch.Tensor],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write a name -> tensor mapping (typically a module state_dict)"""
    path = Path(path)
    index = {
        "tensors": {
            name: {"shape": list(t.shape), "dtype": str(t.dtype).replace("torch.", "")}
            for name, t in sorted(tensors.items())
        },
        "metadata": metadata or {},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w") as archive:
            archive.writestr(_entry(INDEX_NAME), json.dumps(index, sort_keys=True, indent=2))
            for name, tensor in sorted(tensors.items()):
                array = tensor.detach().cpu().to(torch.float64).numpy()
                archive.writestr(_entry(f"{name}.tnsr"), encode_tnsr(array))
    except OSError as e:
        raise InputError(f"cannot write checkpoint: {e.strerror or e}", path=str(path))

    logger.debug("Checkpoint written", {"path": str(path), "tensors": len(tensors)})
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Return (name -> float32 array, metadata)"""
    path = Path(path)
    try:
        with zipfile.ZipFile(path, "r") as archive:
            names = set(archive.namelist())
            if INDEX_NAME not in names:
                raise CheckpointError(f"checkpoint {path} has no {INDEX_NAME}")
            index = json.loads(archive.read(INDEX_NAME))
            arrays: Dict[str, np.ndarray] = {}
            for name, spec in index.get("tensors", {}).items():
                entry = f"{name}.tnsr"
                if entry not in names:
                    raise CheckpointError("tensor listed in index but missing", tensor_name=name)
                array = decode_tnsr(archive.read(entry), source=f"{path}:{entry}")
                if list(array.shape) != list(spec["shape"]):
                    raise CheckpointError(
                        f"stored shape {list(array.shape)} differs from index {spec['shape']}",
                        tensor_name=name,
                    )
                arrays[name] = array
    except (OSError, zipfile.BadZipFile) as e:
        raise InputError(f"cannot read checkpoint: {e}", path=str(path))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint index in {path}: {e}")
    return arrays, index.get("metadata", {})


def load_into(module: torch.nn.Module, arrays: Dict[str, np.ndarray]) -> None:
    """Copy arrays into a module's state; names and shapes must match exactly"""
    state = module.state_dict()
    for name in state:
        if name not in arrays:
            raise CheckpointError("missing from checkpoint", tensor_name=name)
    for name, array in arrays.items():
        if name not in state:
            raise CheckpointError("not a tensor of this model", tensor_name=name)
        if tuple(state[name].shape) != tuple(array.shape):
            raise CheckpointError(
                f"shape {list(array.shape)} does not match model {list(state[name].shape)}",
                tensor_name=name,
            )
    with torch.no_grad():
        for name, target in state.items():
            target.copy_(torch.from_numpy(np.ascontiguousarray(arrays[name])).to(target.dtype))

