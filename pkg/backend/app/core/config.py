#!/usr/bin/env python3
"""
Configuration models for the ETES deblurring toolkit

Defaults come from config/default.yaml, ETES_* environment variables
override them, and command-line flags override both.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from backend.app.core.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[3] / "config" / "default.yaml"

# Rec.601 luma
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class PhysicsConfig(BaseModel):
    """Event generation and model-based deblurring parameters"""

    beta: float = Field(0.2, gt=0, description="Contrast threshold in log-intensity units")
    log_floor: float = Field(1.0 / 255.0, gt=0, description="Intensity floor applied before log")

    model_config = ConfigDict(extra="forbid")


class SynthesisConfig(BaseModel):
    """Exposure/readout dataset synthesis parameters"""

    source_fps: float = Field(240.0, gt=0, description="Frame rate of the sharp source video")
    m: int = Field(9, ge=1, description="Exposure frames per shutter period")
    n: int = Field(7, ge=0, description="Readout frames per shutter period")
    noise: bool = Field(False, description="Add uniform readout noise to the exposure count")
    noise_factor: float = Field(0.6, ge=0, description="Noise half-width as a multiple of n")
    seed: int = Field(0, ge=0, description="Base seed for per-window noise streams")

    model_config = ConfigDict(extra="forbid")


class RepresentationConfig(BaseModel):
    """Event embedding parameters"""

    voxel_bins: int = Field(16, ge=1, description="Temporal bins of the voxel grid")
    num_units: int = Field(8, ge=1, description="Temporal units of the current shutter period")

    model_config = ConfigDict(extra="forbid")


class ModelConfig(BaseModel):
    """Network structure, desk scale"""

    image_channels: int = Field(1, ge=1, description="1 for luma frames, 3 for RGB")
    voxel_bins: int = Field(16, ge=1, description="Bins of the past-period voxel grid")
    num_units: int = Field(8, ge=1, description="Temporal units N; T = N + 1")
    frame_channels: List[int] = Field(default_factory=lambda: [16, 32, 64])
    event_channels: List[int] = Field(default_factory=lambda: [8, 16, 32])
    hidden_channels: int = Field(16, ge=1, description="Recurrent hidden state channels")
    gn_groups: int = Field(4, ge=1, description="Group-norm groups of the ETES templates")
    filter_kernel: int = Field(5, ge=1, description="Dynamic convolution kernel size")
    use_recurrent_encoding: bool = Field(True, description="Shared recurrent encoder for current units")
    use_etes: bool = Field(True, description="Exposure time-based event selection")
    use_fusion: bool = Field(True, description="Attention/dynamic-filter fusion instead of concatenation")

    model_config = ConfigDict(extra="forbid")

    @field_validator("frame_channels", "event_channels")
    @classmethod
    def validate_three_scales(cls, v: List[int]) -> List[int]:
        if len(v) != 3 or any(c < 1 for c in v):
            raise ValueError("exactly three positive channel counts are required")
        return v

    @model_validator(mode="after")
    def validate_structure(self) -> "ModelConfig":
        if self.filter_kernel % 2 == 0:
            raise ValueError("filter_kernel must be odd")
        if self.event_channels[0] % self.gn_groups != 0:
            raise ValueError("event_channels[0] must be divisible by gn_groups")
        return self

    @property
    def temporal_slots(self) -> int:
        return self.num_units + 1


class TrainingConfig(BaseModel):
    """Optimizer, schedule and loss settings"""

    learning_rate: float = Field(1e-4, ge=0)
    steps: int = Field(2000, ge=0)
    batch_size: int = Field(4, ge=1)
    crop_size: int = Field(48, ge=4, description="Random crop side; multiple of 4")
    milestones: Tuple[float, float] = Field((0.6, 0.8), description="Fractions of the schedule where lr halves")
    gamma: float = Field(0.5, gt=0, le=1)
    lambdas: Tuple[float, float, float] = Field((1.0, 0.1, 0.1))
    charbonnier_eps: float = Field(1e-3, gt=0)
    multi_scale_loss: bool = Field(True, description="Off keeps only the full-resolution term")
    seed: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)
    checkpoint_every: int = Field(500, ge=1)
    record_wall_time: bool = Field(True, description="Write wall_ms to the training log")

    model_config = ConfigDict(extra="forbid")

    @field_validator("crop_size")
    @classmethod
    def validate_crop(cls, v: int) -> int:
        if v % 4 != 0:
            raise ValueError("crop_size must be a multiple of 4")
        return v

    def effective_lambdas(self) -> Tuple[float, float, float]:
        if self.multi_scale_loss:
            return self.lambdas
        return (self.lambdas[0], 0.0, 0.0)


class EvalConfig(BaseModel):
    """Metric parameters"""

    psnr_cap: float = Field(99.0, gt=0, description="PSNR reported for identical images")
    ssim_window: int = Field(11, ge=1, description="Gaussian window side")
    ssim_sigma: float = Field(1.5, gt=0)
    ssim_k1: float = Field(0.01, gt=0)
    ssim_k2: float = Field(0.03, gt=0)

    model_config = ConfigDict(extra="forbid")


class AppSettings(BaseSettings):
    """All settings; ETES_<SECTION>__<FIELD> environment variables override YAML"""

    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    synthesis: SynthesisConfig = Field(default_factory=SynthesisConfig)
    representation: RepresentationConfig = Field(default_factory=RepresentationConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    model_config = SettingsConfigDict(
        env_prefix="ETES_", env_nested_delimiter="__", extra="forbid"
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # environment beats the YAML values passed as init kwargs
        return (env_settings, init_settings, file_secret_settings)


def load_settings(path: Optional[Union[str, Path]] = None) -> AppSettings:
    """Load settings from a YAML file (default: config/default.yaml)"""
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    data: Dict = {}
    if config_path.exists():
        try:
            with open(config_path, "r") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise InputError(f"cannot read settings: {e}", path=str(config_path))
    elif path is not None:
        raise InputError("settings file not found", path=str(config_path))
    else:
        logger.debug(f"No settings file at {config_path}, using built-in defaults")

    try:
        return AppSettings(**data)
    except ValueError as e:
        raise ConfigError(f"invalid settings in {config_path}: {e}")


def parse_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a flat `key = value` run-config file"""
    values: Dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise InputError(f"cannot read run config: {e}", path=str(path))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values
