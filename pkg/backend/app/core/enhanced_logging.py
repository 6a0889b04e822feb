#!/usr/bin/env python3
"""
Enhanced Logging System for the ETES deblurring toolkit
Structured, component-scoped logging with JSON detail payloads
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

LOG_DIR_ENV = "ETES_LOG_DIR"


class DeblurLogger:
    """Component logger with structured payloads for pipeline operations"""

    def __init__(self, component_name: str):
        self.component_name = component_name
        self.logger = logging.getLogger(f"etes.{component_name}")

        # File logging only when a log directory is configured
        logs_dir = os.environ.get(LOG_DIR_ENV)
        if logs_dir and not self.logger.handlers:
            path = Path(logs_dir)
            path.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(path / f"{component_name}.log")
            handler.setFormatter(
                logging.Formatter(
                    "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                    datefmt="%Y-%m-%d %H:%M:%S",
                )
            )
            self.logger.addHandler(handler)

    @staticmethod
    def _dump(details: Dict[str, Any]) -> str:
        return json.dumps(details, sort_keys=True, default=str)

    def log_simulation(
        self, n_frames: int, n_events: int, beta: float, duration_us: int
    ):
        """Log an event-simulation run"""
        rate = n_events / (duration_us * 1e-6) if duration_us > 0 else 0.0
        log_data = {
            "component": "event_simulation",
            "frames": n_frames,
            "events": n_events,
            "beta": beta,
            "duration_us": duration_us,
            "events_per_second": round(rate, 3),
        }
        self.logger.info(f"⚡ SIMULATION: {self._dump(log_data)}")

    def log_dataset_sample(
        self, config_tag: str, index: int, m_effective: int, exposure: tuple
    ):
        """Log one synthesized blur sample"""
        log_data = {
            "component": "shutter_synthesis",
            "config_tag": config_tag,
            "index": index,
            "m_effective": m_effective,
            "exposure_window": list(exposure),
        }
        self.logger.debug(f"🎞️ SAMPLE: {self._dump(log_data)}")

    def log_training_step(
        self, step: int, loss: float, lr: float, wall_ms: float = 0.0
    ):
        """Log a single optimizer step"""
        log_data = {
            "component": "training",
            "step": step,
            "loss": loss,
            "lr": lr,
            "wall_ms": round(wall_ms, 3),
        }
        self.logger.info(f"🏋️ TRAIN_STEP: {self._dump(log_data)}")

    def log_system_event(self, event_type: str, details: Dict[str, Any]):
        """Log general pipeline events"""
        log_data = {
            "component": "system_event",
            "event_type": event_type,
            "details": details,
        }
        self.logger.info(f"⚙️ SYSTEM_EVENT: {self._dump(log_data)}")

    def error(self, message: str, details: Optional[Dict] = None):
        """Log error with optional structured details"""
        if details:
            self.logger.error(f"❌ {message} | Details: {self._dump(details)}")
        else:
            self.logger.error(f"❌ {message}")

    def warning(self, message: str, details: Optional[Dict] = None):
        """Log warning with optional structured details"""
        if details:
            self.logger.warning(f"⚠️ {message} | Details: {self._dump(details)}")
        else:
            self.logger.warning(f"⚠️ {message}")

    def info(self, message: str, details: Optional[Dict] = None):
        """Log info with optional structured details"""
        if details:
            self.logger.info(f"ℹ️ {message} | Details: {self._dump(details)}")
        else:
            self.logger.info(f"ℹ️ {message}")

    def debug(self, message: str, details: Optional[Dict] = None):
        if details:
            self.logger.debug(f"🔎 {message} | Details: {self._dump(details)}")
        else:
            self.logger.debug(f"🔎 {message}")

    def success(self, message: str, details: Optional[Dict] = None):
        """Log success with optional structured details"""
        if details:
            self.logger.info(f"✅ {message} | Details: {self._dump(details)}")
        else:
            self.logger.info(f"✅ {message}")


def create_component_logger(component_name: str) -> DeblurLogger:
    """Create a logger for a specific component"""
    return DeblurLogger(component_name)
