"""Per-patient normalization and differencing of aligned timelines."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .timeline import AlignedTimeline, Parameterization

CHANNELS = ("y", "x", "z")


class InsufficientDataError(ValueError):
    pass


def normalize_patient(tl: AlignedTimeline, channels=("y",)) -> AlignedTimeline:
    """Z-score the chosen channels with the sample (n-1) standard deviation.

    A channel with zero spread becomes all zeros and is flagged
    ``"degenerate:<channel>"`` in ``tl.flags``.
    """
    if len(tl) < 2:
        raise InsufficientDataError("normalization needs at least 2 points")
    updates = {}
    flags = list(tl.flags)
    for name in channels:
        v = tl.channel(name)
        sd = v.std(ddof=1)
        if sd == 0.0 or not np.isfinite(sd):
            updates[name] = np.zeros_like(v)
            flags.append(f"degenerate:{name}")
        else:
            updates[name] = (v - v.mean()) / sd
    return replace(tl, flags=tuple(flags), **updates)


def difference(tl: AlignedTimeline) -> AlignedTimeline:
    """Consecutive differences on every channel; the series loses its first point."""
    if len(tl) < 2:
        raise InsufficientDataError("differencing needs at least 2 points")
    if tl.parameterization is Parameterization.SEQUENCE:
        times = np.arange(len(tl) - 1, dtype=float)
    else:
        times = tl.times[1:]
    return replace(tl, times=times, y=np.diff(tl.y), x=np.diff(tl.x), z=np.diff(tl.z))


def apply_transforms(tl: AlignedTimeline, *, normalized: bool, differenced: bool,
                     normalize_all_channels: bool = False) -> AlignedTimeline:
    """Normalize (optional) and then difference (optional).

    Normalization always runs first so its statistics come from the level series.
    """
    if normalized:
        tl = normalize_patient(tl, CHANNELS if normalize_all_channels else ("y",))
    if differenced:
        tl = difference(tl)
    return tl
