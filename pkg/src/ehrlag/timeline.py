"""Per-patient aligned timelines built from raw events.

Pipeline for one patient: binarize drug orders, encode admissions, optionally
bin the drug channel, interpolate everything onto the union time grid, then
either resample to whole days (clock time) or re-index by sequence.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .cohort import Channel, PatientEvents

DAY = 86400.0
HALF_DAY = 43200.0


class Parameterization(enum.Enum):
    CLOCK = "clock"
    SEQUENCE = "sequence"


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    channel: str
    times: np.ndarray
    values: np.ndarray
    # times of the original drug-of-interest orders, kept through binning
    anchors: np.ndarray | None = None

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError(f"{self.channel}: times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        return (isinstance(other, ChannelSeries) and self.channel == other.channel
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist()))

    @classmethod
    def from_points(cls, channel: str, points) -> "ChannelSeries":
        pts = list(points)
        t = np.array([p[0] for p in pts], dtype=float)
        v = np.array([p[1] for p in pts], dtype=float)
        return cls(channel, t, v)


@dataclass(frozen=True, eq=False)
class AlignedTimeline:
    """Lab (``y``), drug (``x``) and context (``z``) values on a shared time axis."""

    times: np.ndarray
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    parameterization: Parameterization = Parameterization.CLOCK
    patient_id: str = ""
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.y) == len(self.x) == len(self.z) == n):
            raise ValueError("every channel needs one value per time point")

    def __len__(self):
        return len(self.times)

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def with_channels(self, **kw) -> "AlignedTimeline":
        return replace(self, **kw)

    def to_text(self) -> str:
        """Debug dump as ``time,y,x,z`` rows."""
        rows = ["time,y,x,z"]
        rows += [f"{t!r},{a!r},{b!r},{c!r}" for t, a, b, c in
                 zip(self.times.tolist(), self.y.tolist(), self.x.tolist(), self.z.tolist())]
        return "\n".join(rows) + "\n"


def _collapse_max(times: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(times) == 0:
        return times.astype(float), values.astype(float)
    order = np.lexsort((values, times))
    t, v = times[order], values[order]
    uniq, start = np.unique(t, return_index=True)
    return uniq.astype(float), np.maximum.reduceat(v, start).astype(float)


def binarize_drugs(events: PatientEvents) -> ChannelSeries:
    """Target orders become 1, other-drug orders 0; co-timed orders keep the max."""
    mask = (events.channel == Channel.TARGET_DRUG) | (events.channel == Channel.OTHER_DRUG)
    t = events.time[mask]
    v = (events.channel[mask] == Channel.TARGET_DRUG).astype(float)
    t, v = _collapse_max(t, v)
    return ChannelSeries("x", t, v)


def encode_admissions(events: PatientEvents) -> ChannelSeries:
    """Each admission at t gives (t - 1 day, 0), (t, 1), (t + 1 day, 0)."""
    t_adm = events.time[events.channel == Channel.ADMISSION]
    t = np.concatenate([t_adm - DAY, t_adm, t_adm + DAY])
    v = np.concatenate([np.zeros_like(t_adm), np.ones_like(t_adm), np.zeros_like(t_adm)])
    t, v = _collapse_max(t, v)
    return ChannelSeries("z", t, v)


def lab_series(events: PatientEvents) -> ChannelSeries:
    t, v = events.select(Channel.LAB)
    return ChannelSeries("y", t.astype(float), v.astype(float))


def bin_drug_channel(drug: ChannelSeries, half_width: float = HALF_DAY) -> ChannelSeries:
    """Max-window of +-12 h: any point within ``half_width`` of a 1 becomes 1.

    The window is centred on the original orders only, so binning an
    already binned series changes nothing. The boundary is inclusive.
    """
    ones = drug.anchors if drug.anchors is not None else drug.times[drug.values == 1.0]
    if len(ones) == 0 or len(drug) == 0:
        return replace(drug, anchors=ones)
    idx = np.searchsorted(ones, drug.times)
    left = np.abs(drug.times - ones[np.clip(idx - 1, 0, len(ones) - 1)])
    right = np.abs(ones[np.clip(idx, 0, len(ones) - 1)] - drug.times)
    near = np.minimum(left, right) <= half_width
    return ChannelSeries(drug.channel, drug.times.copy(), np.where(near, 1.0, drug.values), ones)


def interpolate_at(series: ChannelSeries, at: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Clock-weighted linear interpolation, constant beyond the observed span."""
    if len(series) == 0:
        return np.full(len(at), fill, dtype=float)
    return np.interp(at, series.times, series.values)


def interpolate(lab: ChannelSeries, drug: ChannelSeries, context: ChannelSeries | None = None,
                patient_id: str = "") -> AlignedTimeline:
    """Align the three channels on the union of their observation times.

    ``context=None`` leaves the context channel out of the grid (and fills it
    with zeros); an empty series contributes no times either.
    """
    if len(lab) < 2:
        raise ValueError("lab channel needs at least 2 observations")
    parts = [lab.times, drug.times]
    if context is not None:
        parts.append(context.times)
    times = np.unique(np.concatenate(parts))
    z = interpolate_at(context, times) if context is not None else np.zeros(len(times))
    return AlignedTimeline(
        times=times,
        y=interpolate_at(lab, times),
        x=interpolate_at(drug, times),
        z=z,
        parameterization=Parameterization.CLOCK,
        patient_id=patient_id,
    )


def to_sequence_time(tl: AlignedTimeline) -> AlignedTimeline:
    return replace(tl, times=np.arange(len(tl), dtype=float), parameterization=Parameterization.SEQUENCE)


def resample_daily(tl: AlignedTimeline) -> AlignedTimeline:
    """Sample every channel at first_time + k days, k = 0, 1, ... up to last_time."""
    if tl.parameterization is not Parameterization.CLOCK:
        raise ValueError("resample_daily needs a clock-time timeline")
    t0 = tl.times[0]
    n_days = int(np.floor((tl.times[-1] - t0) / DAY))
    grid = t0 + DAY * np.arange(n_days + 1)
    return replace(
        tl,
        times=grid,
        y=np.interp(grid, tl.times, tl.y),
        x=np.interp(grid, tl.times, tl.x),
        z=np.interp(grid, tl.times, tl.z),
    )


def build_timeline(events: PatientEvents, *, sequence: bool, binned: bool, context: bool) -> AlignedTimeline:
    """Events -> aligned timeline under the given time/binning/context choices.

    Clock-time timelines are resampled to a daily grid so a lag of k means k days.
    """
    drug = binarize_drugs(events)
    if binned:
        drug = bin_drug_channel(drug)
    ctx = encode_admissions(events) if context else None
    tl = interpolate(lab_series(events), drug, ctx, patient_id=events.patient_id)
    return to_sequence_time(tl) if sequence else resample_daily(tl)
