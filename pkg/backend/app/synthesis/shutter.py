#!/usr/bin/env python3
"""
Shutter simulation and blur dataset synthesis

Each shutter period of m + n source frames is split into an exposure phase
(the first m' frames, averaged into the blurred frame) and a readout phase
(discarded frames). With readout noise enabled, m' = clamp(floor(m + eps + 0.5),
1, m + n) with eps ~ U[-noise_factor * n, noise_factor * n], drawn from an RNG
keyed on (seed, window index) so the draw does not depend on generation order.
Datasets are tagged "dataset-m-n".
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import ConfigError, InputError, InvariantViolation
from backend.app.io.formats import read_evt1, read_tnsr, write_evt1, write_tnsr
from backend.app.physics.edi import synthesize_blur
from backend.app.physics.events import EventStream
from backend.app.physics.frames import FrameSequence

logger = create_component_logger("shutter_synthesis")

MANIFEST_NAME = "manifest.jsonl"


class ShutterConfig(BaseModel):
    """Exposure/readout split of one synthesized dataset"""

    m: int = Field(..., ge=1, description="Exposure frames per shutter period")
    n: int = Field(..., ge=0, description="Readout frames per shutter period")
    noise_enabled: bool = Field(False, description="Perturb the exposure count with readout noise")
    noise_factor: float = Field(0.6, ge=0, description="Noise half-width as a multiple of n")
    seed: int = Field(0, ge=0)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @property
    def period(self) -> int:
        return self.m + self.n

    @property
    def noise_half_width(self) -> float:
        return self.noise_factor * self.n

    @property
    def tag(self) -> str:
        return f"dataset-{self.m}-{self.n}"


@dataclass(frozen=True)
class ShutterWindow:
    """One shutter period in source-frame indices"""

    index: int
    exposure: Tuple[int, ...]
    readout: Tuple[int, ...]
    epsilon: float
    config_tag: str

    @property
    def m_effective(self) -> int:
        return len(self.exposure)

    @property
    def frames(self) -> Tuple[int, ...]:
        return self.exposure + self.readout


@dataclass(frozen=True, eq=False)
class BlurSample:
    """A blurred frame, its sharp anchor and the timing needed to embed its events"""

    blur: np.ndarray
    gt_sharp: np.ndarray
    exposure_window: Tuple[int, int]
    events_window: Tuple[int, int]
    past_window: Tuple[int, int]
    config_tag: str
    source_indices: Tuple[int, ...]
    exposure_times: Tuple[int, ...]
    anchor_index: int
    anchor_time: int
    events: EventStream = field(repr=False)

    @property
    def m_effective(self) -> int:
        return len(self.source_indices)


def draw_epsilon(config: ShutterConfig, window_index: int) -> float:
    """Readout noise for one window; 0 when noise is off"""
    half_width = config.noise_half_width
    if not config.noise_enabled or half_width == 0:
        return 0.0
    rng = np.random.default_rng([config.seed, window_index])
    return float(rng.uniform(-half_width, half_width))


def draw_exposure_count(config: ShutterConfig, window_index: int) -> Tuple[int, float]:
    """(m', eps) for one window"""
    eps = draw_epsilon(config, window_index)
    m_effective = int(np.floor(config.m + eps + 0.5))
    return min(max(m_effective, 1), config.period), eps


def split_shutter(total_frames: int, config: ShutterConfig) -> List[ShutterWindow]:
    """Consecutive disjoint shutter periods; leftover frames at the end are unused"""
    if total_frames < config.period:
        raise InputError(
            f"{total_frames} frames cannot fill one shutter period of {config.period}"
        )
    windows = []
    for w in range(total_frames // config.period):
        start = w * config.period
        m_effective, eps = draw_exposure_count(config, w)
        indices = tuple(range(start, start + config.period))
        windows.append(
            ShutterWindow(
                index=w,
                exposure=indices[:m_effective],
                readout=indices[m_effective:],
                epsilon=eps,
                config_tag=config.tag,
            )
        )
    return windows


def make_blur_sample(
    seq: FrameSequence, window: ShutterWindow, events: EventStream
) -> BlurSample:
    """Average the exposure frames; the events window spans the whole shutter period"""
    if not window.exposure:
        raise InvariantViolation("shutter window has an empty exposure set")
    if max(window.frames) >= len(seq) or min(window.frames) < 0:
        raise InputError(f"window frames {window.frames} exceed the {len(seq)}-frame sequence")

    dt = seq.frame_interval
    exposure = list(window.exposure)
    anchor = exposure[(len(exposure) - 1) // 2]
    t_start = int(seq.timestamps[window.frames[0]])
    t_end = t_start + len(window.frames) * dt
    past_start = max(t_start - len(window.frames) * dt, int(seq.timestamps[0])) if window.index else t_start

    return BlurSample(
        blur=synthesize_blur(seq.frames[exposure]),
        gt_sharp=seq.frames[anchor].copy(),
        exposure_window=(exposure[0], exposure[-1]),
        events_window=(t_start, t_end),
        past_window=(past_start, t_start),
        config_tag=window.config_tag,
        source_indices=tuple(exposure),
        exposure_times=tuple(int(t) for t in seq.timestamps[exposure]),
        anchor_index=anchor,
        anchor_time=int(seq.timestamps[anchor]),
        events=events.slice(past_start, t_end),
    )


class ManifestRecord(BaseModel):
    """One line of manifest.jsonl"""

    index: int = Field(..., ge=0)
    config_tag: str
    m: int
    n: int
    m_effective: int
    epsilon: float
    seed: int
    exposure_indices: List[int]
    readout_indices: List[int]
    exposure_times: List[int]
    anchor_time: int
    exposure_window: Tuple[int, int] = Field(..., description="Exposure time span [start, end)")
    readout_window: Tuple[int, int]
    events_window: Tuple[int, int]
    past_window: Tuple[int, int]
    blur_path: str
    sharp_path: str
    events_path: str

    model_config = ConfigDict(extra="forbid")


@dataclass(frozen=True, eq=False)
class LoadedSample:
    """A manifest record with its arrays read back"""

    record: ManifestRecord
    blur: np.ndarray
    sharp: np.ndarray
    events: EventStream


def _record_for(
    index: int, config: ShutterConfig, window: ShutterWindow, sample: BlurSample,
    dt: int, paths: Dict[str, str],
) -> ManifestRecord:
    exposure_end = sample.events_window[0] + window.m_effective * dt
    return ManifestRecord(
        index=index,
        config_tag=config.tag,
        m=config.m,
        n=config.n,
        m_effective=window.m_effective,
        epsilon=window.epsilon,
        seed=config.seed,
        exposure_indices=list(window.exposure),
        readout_indices=list(window.readout),
        exposure_times=list(sample.exposure_times),
        anchor_time=sample.anchor_time,
        exposure_window=(sample.events_window[0], exposure_end),
        readout_window=(exposure_end, sample.events_window[1]),
        events_window=sample.events_window,
        past_window=sample.past_window,
        **paths,
    )


def build_dataset(
    seq: FrameSequence,
    events: EventStream,
    configs: Sequence[ShutterConfig],
    out_dir: Union[str, Path],
) -> List[ManifestRecord]:
    """Write every window of every config plus manifest.jsonl; returns the records"""
    if not configs:
        raise ConfigError("build_dataset needs at least one shutter config")
    tags = [c.tag for c in configs]
    if len(set(tags)) != len(tags):
        raise ConfigError(f"duplicate dataset tags: {tags}")

    out_dir = Path(out_dir)
    dt = seq.frame_interval
    records: List[ManifestRecord] = []
    for config in configs:
        for window in split_shutter(len(seq), config):
            sample = make_blur_sample(seq, window, events)
            rel = Path(config.tag) / f"sample_{window.index:05d}"
            paths = {
                "blur_path": (rel / "blur.tnsr").as_posix(),
                "sharp_path": (rel / "sharp.tnsr").as_posix(),
                "events_path": (rel / "events.evt1").as_posix(),
            }
            write_tnsr(sample.blur, out_dir / paths["blur_path"])
            write_tnsr(sample.gt_sharp, out_dir / paths["sharp_path"])
            write_evt1(sample.events, out_dir / paths["events_path"])

            record = _record_for(len(records), config, window, sample, dt, paths)
            records.append(record)
            logger.log_dataset_sample(config.tag, record.index, window.m_effective, sample.exposure_window)

    write_manifest(records, out_dir / MANIFEST_NAME)
    logger.success(
        "Dataset written",
        {"out_dir": str(out_dir), "samples": len(records), "tags": tags},
    )
    return records


def write_manifest(records: Sequence[ManifestRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    lines = [json.dumps(r.model_dump(mode="json"), sort_keys=True) for r in records]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise InputError(f"cannot write manifest: {e.strerror or e}", path=str(path))
    return path


def read_manifest(path: Union[str, Path]) -> List[ManifestRecord]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise InputError(f"cannot read manifest: {e.strerror or e}", path=str(path))
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(ManifestRecord(**json.loads(line)))
        except (json.JSONDecodeError, ValueError) as e:
            raise InputError(f"bad manifest line {lineno}: {e}", path=str(path))
    return records


def load_sample(manifest_path: Union[str, Path], record: ManifestRecord) -> LoadedSample:
    """Read one record's arrays relative to the manifest directory"""
    root = Path(manifest_path).parent
    t_span = (record.past_window[0], record.events_window[1])
    return LoadedSample(
        record=record,
        blur=read_tnsr(root / record.blur_path).astype(np.float64),
        sharp=read_tnsr(root / record.sharp_path).astype(np.float64),
        events=read_evt1(root / record.events_path, t_span=t_span),
    )


# (m, n) pairs of the synthesis protocols
PROTOCOLS: Dict[str, Tuple[Tuple[int, int], ...]] = {
    "train": ((9, 7), (11, 5), (13, 3), (15, 1)),
    "test": ((9, 5), (11, 3), (13, 1)),
    "generalization": ((7, 5), (9, 3), (11, 1)),
}

# dataset variants: fixed exposure, several exposures, several exposures with readout noise
VARIANTS = ("known", "unknown", "unknown+noise")


def protocol_configs(
    name: str, seed: int = 0, noise: Optional[bool] = None, noise_factor: float = 0.6
) -> List[ShutterConfig]:
    """
    Shutter configs for a named protocol.

    "train" enables readout noise by default; "test" and "generalization"
    keep the exposure count fixed per dataset.
    """
    if name not in PROTOCOLS:
        raise ConfigError(f"unknown protocol '{name}', expected one of {sorted(PROTOCOLS)}")
    noisy = (name == "train") if noise is None else noise
    return [
        ShutterConfig(m=m, n=n, noise_enabled=noisy, noise_factor=noise_factor, seed=seed)
        for m, n in PROTOCOLS[name]
    ]


def variant_configs(
    variant: str, m_values: Sequence[int], period: int, seed: int = 0, noise_factor: float = 0.6
) -> List[ShutterConfig]:
    """Training-set variants over a fixed period m + n"""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{variant}', expected one of {list(VARIANTS)}")
    if not m_values:
        raise ConfigError("at least one exposure count is required")
    if any(m < 1 or m > period for m in m_values):
        raise ConfigError(f"exposure counts {list(m_values)} must lie in [1, {period}]")
    chosen = list(m_values)[:1] if variant == "known" else list(m_values)
    return [
        ShutterConfig(
            m=m, n=period - m, noise_enabled=(variant == "unknown+noise"), noise_factor=noise_factor, seed=seed
        )
        for m in chosen
    ]
