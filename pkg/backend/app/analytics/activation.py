#!/usr/bin/env python3
"""
Temporal activation profiles

Slot 0 of the activation map covers the previous shutter period, slots
1..N the equal-length units of the current one. Each slot is classed as
exposure (inside the exposure phase), readout (inside the readout phase),
past, or mixed, and the exposure/readout means summarize how selective
the activation is.
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from backend.app.analytics.models import (  # noqa: E402
    ActivationProfile,
    ActivationSlot,
    ExposureSelectivity,
    SlotPhase,
)
from backend.app.core.errors import DimensionError, InputError  # noqa: E402
from backend.app.models.etes import TemporalActivationMap  # noqa: E402

Window = Tuple[float, float]

EXPOSURE_START_COLOR = "gold"
EXPOSURE_END_COLOR = "red"


def slot_windows(past_window: Window, events_window: Window, num_units: int) -> List[Window]:
    t0, t1 = events_window
    span = (t1 - t0) / num_units
    return [tuple(past_window)] + [(t0 + n * span, t0 + (n + 1) * span) for n in range(num_units)]


def classify_slot(index: int, window: Window, exposure: Window, events_window: Window) -> SlotPhase:
    if index == 0:
        return SlotPhase.PAST
    start, end = window
    if start >= exposure[0] and end <= exposure[1]:
        return SlotPhase.EXPOSURE
    if start >= exposure[1] and end <= events_window[1]:
        return SlotPhase.READOUT
    return SlotPhase.MIXED


def exposure_selectivity(slots: Sequence[ActivationSlot]) -> ExposureSelectivity:
    def mean_of(phase: SlotPhase) -> Optional[float]:
        values = [s.mean_Z for s in slots if s.phase == phase]
        return sum(values) / len(values) if values else None

    return ExposureSelectivity(
        exposure_mean=mean_of(SlotPhase.EXPOSURE), readout_mean=mean_of(SlotPhase.READOUT)
    )


def build_profile(
    Z: TemporalActivationMap,
    past_window: Window,
    events_window: Window,
    exposure_window: Window,
    sample: str = "sample",
    config_tag: Optional[str] = None,
) -> ActivationProfile:
    """Per-slot mean activation (over batch and channels) with phase labels"""
    means = Z.slot_means().mean(dim=0).tolist()
    windows = slot_windows(past_window, events_window, len(means) - 1)
    if len(windows) != len(means):
        raise DimensionError(f"{len(means)} activation slots for {len(windows)} windows")
    slots = [
        ActivationSlot(
            slot_index=i,
            slot_t_start=float(w[0]),
            slot_t_end=float(w[1]),
            mean_Z=float(m),
            phase=classify_slot(i, w, exposure_window, events_window),
        )
        for i, (w, m) in enumerate(zip(windows, means))
    ]
    return ActivationProfile(
        sample=sample,
        config_tag=config_tag,
        exposure_window=[int(exposure_window[0]), int(exposure_window[1])],
        slots=slots,
        selectivity=exposure_selectivity(slots),
    )


def plot_activation_svg(profile: ActivationProfile, path: Union[str, Path]) -> Path:
    """Bar chart of mean activation per slot with the exposure boundaries marked"""
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": "etes", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 3.2))
        try:
            for slot in profile.slots:
                color = "tab:gray" if slot.phase == SlotPhase.PAST else "tab:blue"
                ax.bar(
                    slot.slot_t_start,
                    slot.mean_Z,
                    width=slot.slot_t_end - slot.slot_t_start,
                    align="edge",
                    color=color,
                    edgecolor="black",
                    linewidth=0.5,
                )
            ax.axvline(profile.exposure_window[0], color=EXPOSURE_START_COLOR, linewidth=2)
            ax.axvline(profile.exposure_window[1], color=EXPOSURE_END_COLOR, linewidth=2)
            ax.set_ylim(0.0, 1.0)
            ax.set_xlabel("time (us)")
            ax.set_ylabel("mean activation")
            ax.set_title(profile.config_tag or profile.sample)
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            raise InputError(f"cannot write plot: {e.strerror or e}", path=str(path))
        finally:
            plt.close(fig)
    return path
