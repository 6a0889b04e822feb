#!/usr/bin/env python3
"""
Training loop

Adam on the multi-scale Charbonnier loss with the learning rate halved at
fixed fractions of the schedule. Each step appends (step, loss, lr, wall_ms)
to train_log.csv; checkpoints are written every `checkpoint_every` steps and
at the end. A non-finite loss stops training after dumping a diagnostic JSON.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import torch
from torch.utils.data import DataLoader, Dataset

from backend.app.core.config import TrainingConfig
from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import InputError, NonFiniteError
from backend.app.io.checkpoint import save_checkpoint
from backend.app.models.network import DeblurNet
from backend.app.training.loss import charbonnier_loss, target_pyramid

logger = create_component_logger("training")

LOG_HEADER = "step,loss,lr,wall_ms"


def model_inputs(model: torch.nn.Module, batch: Dict[str, torch.Tensor]):
    dtype = next(model.parameters()).dtype
    return (
        batch["blur"].to(dtype),
        batch["past_voxel"].to(dtype),
        batch["units"].to(dtype),
    )


def train_step(
    model: DeblurNet,
    optimizer: torch.optim.Optimizer,
    batch: Dict[str, torch.Tensor],
    lambdas: Sequence[float] = (1.0, 0.1, 0.1),
    eps: float = 1e-3,
) -> float:
    """One optimizer step; raises NonFiniteError before touching the parameters"""
    model.train()
    optimizer.zero_grad()
    blur, past_voxel, units = model_inputs(model, batch)
    result = model(blur, past_voxel, units)
    targets = target_pyramid(batch["sharp"].to(blur.dtype), len(result.outputs))
    loss = charbonnier_loss(result.outputs, targets, lambdas, eps)
    if not bool(torch.isfinite(loss)):
        raise NonFiniteError("training loss", {"loss": float(loss.detach())})
    loss.backward()
    optimizer.step()
    return float(loss.detach())


@dataclass
class TrainingResult:
    losses: List[float] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def final_checkpoint(self) -> Optional[Path]:
        return self.checkpoints[-1] if self.checkpoints else None


class Trainer:
    """Runs `config.steps` optimizer steps over a dataset"""

    def __init__(
        self,
        model: DeblurNet,
        dataset: Dataset,
        config: TrainingConfig,
        out_dir: Optional[Union[str, Path]] = None,
    ):
        if len(dataset) == 0:
            raise InputError("training dataset is empty")
        self.model = model
        self.dataset = dataset
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        milestones = sorted({max(1, int(round(f * config.steps))) for f in config.milestones})
        self.scheduler = torch.optim.lr_scheduler.MultiStepLR(
            self.optimizer, milestones=milestones, gamma=config.gamma
        )
        self.generator = torch.Generator().manual_seed(config.seed)
        self.step = 0

    def _loader(self) -> DataLoader:
        return DataLoader(
            self.dataset,
            batch_size=self.config.batch_size,
            shuffle=True,
            generator=self.generator,
            num_workers=0,
        )

    def _dump_nonfinite(self, batch: Dict[str, torch.Tensor], error: NonFiniteError) -> Optional[Path]:
        if self.out_dir is None:
            return None
        norms = {
            name: float(p.detach().norm()) for name, p in self.model.named_parameters()
        }
        payload = {
            "step": self.step,
            "error": error.to_dict(),
            "batch_indices": batch["index"].tolist() if "index" in batch else [],
            "parameter_norms": norms,
        }
        path = self.out_dir / f"nonfinite_step_{self.step:06d}.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=str))
        return path

    def _checkpoint(self, name: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        metadata = {
            "step": self.step,
            "model": self.model.config.model_dump(mode="json"),
        }
        return save_checkpoint(self.out_dir / name, self.model.state_dict(), metadata)

    def fit(self) -> TrainingResult:
        cfg = self.config
        result = TrainingResult()
        log_lines = [LOG_HEADER]
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        lambdas = cfg.effective_lambdas()

        logger.log_system_event(
            "training_start",
            {"steps": cfg.steps, "batch_size": cfg.batch_size, "samples": len(self.dataset)},
        )
        epoch = 0
        try:
            while self.step < cfg.steps:
                if hasattr(self.dataset, "set_epoch"):
                    self.dataset.set_epoch(epoch)
                for batch in self._loader():
                    if self.step >= cfg.steps:
                        break
                    lr = self.optimizer.param_groups[0]["lr"]
                    started = time.perf_counter()
                    try:
                        loss = train_step(self.model, self.optimizer, batch, lambdas, cfg.charbonnier_eps)
                    except NonFiniteError as e:
                        dump = self._dump_nonfinite(batch, e)
                        logger.error("Non-finite loss, training aborted", {"step": self.step, "dump": str(dump)})
                        raise
                    wall_ms = (time.perf_counter() - started) * 1e3 if cfg.record_wall_time else 0.0
                    self.scheduler.step()
                    self.step += 1

                    result.losses.append(loss)
                    log_lines.append(f"{self.step},{loss:.10g},{lr:.10g},{wall_ms:.3f}")
                    if self.step % cfg.log_every == 0:
                        logger.log_training_step(self.step, loss, lr, wall_ms)
                    if self.step % cfg.checkpoint_every == 0 and self.step < cfg.steps:
                        path = self._checkpoint(f"checkpoint_step_{self.step:06d}.zip")
                        if path is not None:
                            result.checkpoints.append(path)
                epoch += 1
        finally:
            # the log of completed steps survives an aborted run
            if self.out_dir is not None:
                (self.out_dir / "train_log.csv").write_text("\n".join(log_lines) + "\n")

        final = self._checkpoint("checkpoint_final.zip")
        if final is not None:
            result.checkpoints.append(final)
        logger.success(
            "Training finished",
            {"steps": self.step, "final_loss": result.losses[-1] if result.losses else None},
        )
        return result
