#!/usr/bin/env python3
"""
Pydantic models for evaluation and activation reports
Provides type-safe report structures that serialize to JSON and CSV
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SlotPhase(str, Enum):
    """Where a temporal slot lies relative to the shutter period"""
    PAST = "past"
    EXPOSURE = "exposure"
    READOUT = "readout"
    MIXED = "mixed"


class ImageMetric(BaseModel):
    """Metrics of one restored image"""
    name: str = Field(..., description="Sample identifier")
    config_tag: Optional[str] = Field(None, description="dataset-m-n tag of the sample")
    psnr_db: float = Field(..., ge=0, description="PSNR in dB (capped)")
    ssim: float = Field(..., ge=-1, le=1, description="Mean SSIM")

    model_config = ConfigDict(extra='forbid')


class TagAverage(BaseModel):
    """Average metrics over the samples of one dataset tag"""
    config_tag: str
    count: int = Field(..., ge=1)
    psnr_db: float = Field(..., ge=0)
    ssim: float = Field(..., ge=-1, le=1)
    exposure_activation: Optional[float] = Field(None, description="Mean Z over exposure-interior slots")
    readout_activation: Optional[float] = Field(None, description="Mean Z over readout-only slots")

    model_config = ConfigDict(extra='forbid')


class MetricReport(BaseModel):
    """Overall and per-image PSNR/SSIM"""
    psnr_db: float = Field(..., ge=0, description="Mean PSNR in dB")
    ssim: float = Field(..., ge=-1, le=1, description="Mean SSIM")
    per_image: List[ImageMetric] = Field(default_factory=list, description="Per-image breakdown")
    per_tag: List[TagAverage] = Field(default_factory=list, description="Averages per dataset tag")

    model_config = ConfigDict(extra='forbid')

    @field_validator('per_image')
    @classmethod
    def validate_unique_names(cls, v):
        names = [m.name for m in v]
        if len(set(names)) != len(names):
            raise ValueError("image names must be unique")
        return v

    def to_csv(self) -> str:
        lines = ["name,config_tag,psnr_db,ssim"]
        for m in self.per_image:
            lines.append(f"{m.name},{m.config_tag or ''},{m.psnr_db:.6f},{m.ssim:.8f}")
        lines.append(f"mean,,{self.psnr_db:.6f},{self.ssim:.8f}")
        return "\n".join(lines) + "\n"


class ActivationSlot(BaseModel):
    """Mean temporal activation of one slot"""
    slot_index: int = Field(..., ge=0)
    slot_t_start: float
    slot_t_end: float
    mean_Z: float = Field(..., ge=0, le=1, description="Mean activation over channels and batch")
    phase: SlotPhase

    model_config = ConfigDict(extra='forbid')


class ExposureSelectivity(BaseModel):
    """Exposure-interior vs readout-only activation"""
    exposure_mean: Optional[float] = Field(None, description="None when no slot lies inside the exposure")
    readout_mean: Optional[float] = Field(None, description="None when no slot lies inside the readout")

    model_config = ConfigDict(extra='forbid')

    @property
    def selective(self) -> bool:
        """True when exposure slots are more active than readout slots"""
        if self.exposure_mean is None or self.readout_mean is None:
            return False
        return self.exposure_mean > self.readout_mean


class ActivationProfile(BaseModel):
    """Temporal activation of one sample"""
    sample: str
    config_tag: Optional[str] = None
    exposure_window: List[int] = Field(..., min_length=2, max_length=2)
    slots: List[ActivationSlot]
    selectivity: ExposureSelectivity

    model_config = ConfigDict(extra='forbid')

    def to_csv(self) -> str:
        lines = ["slot_index,slot_t_start,slot_t_end,mean_Z"]
        for s in self.slots:
            lines.append(f"{s.slot_index},{s.slot_t_start:.3f},{s.slot_t_end:.3f},{s.mean_Z:.8f}")
        return "\n".join(lines) + "\n"


# Factory functions for creating model instances with validation

def create_tag_averages(
    metrics: List[ImageMetric], selectivity: Optional[Dict[str, List[ExposureSelectivity]]] = None
) -> List[TagAverage]:
    """Group per-image metrics by config tag, sorted by tag"""
    groups: Dict[str, List[ImageMetric]] = {}
    for m in metrics:
        if m.config_tag is not None:
            groups.setdefault(m.config_tag, []).append(m)

    averages = []
    for tag in sorted(groups):
        items = groups[tag]
        exposure = readout = None
        if selectivity and selectivity.get(tag):
            exp_values = [s.exposure_mean for s in selectivity[tag] if s.exposure_mean is not None]
            read_values = [s.readout_mean for s in selectivity[tag] if s.readout_mean is not None]
            exposure = sum(exp_values) / len(exp_values) if exp_values else None
            readout = sum(read_values) / len(read_values) if read_values else None
        averages.append(
            TagAverage(
                config_tag=tag,
                count=len(items),
                psnr_db=sum(m.psnr_db for m in items) / len(items),
                ssim=sum(m.ssim for m in items) / len(items),
                exposure_activation=exposure,
                readout_activation=readout,
            )
        )
    return averages


def create_metric_report(
    metrics: List[ImageMetric], selectivity: Optional[Dict[str, List[ExposureSelectivity]]] = None
) -> MetricReport:
    """Create a validated report with overall and per-tag means"""
    if not metrics:
        raise ValueError("a metric report needs at least one image")
    return MetricReport(
        psnr_db=sum(m.psnr_db for m in metrics) / len(metrics),
        ssim=sum(m.ssim for m in metrics) / len(metrics),
        per_image=metrics,
        per_tag=create_tag_averages(metrics, selectivity),
    )
