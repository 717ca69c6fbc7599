"""Transmission traces: container, averaging and trapping-time extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class TransmissionTrace:
    """Time series of the intracavity photon number.

    ``empty_level`` is the photon number of the empty cavity at full drive
    (used to normalize the transmission).  ``search_from`` marks the end of
    the drive switch-on transient (ms); maxima are searched after it.
    """

    times: np.ndarray
    photon_number: np.ndarray
    n_eff: np.ndarray
    trapped_fraction: np.ndarray
    empty_level: float = float("nan")
    search_from: float = float("-inf")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.photon_number = np.asarray(self.photon_number, dtype=float)
        self.n_eff = np.asarray(self.n_eff, dtype=float)
        self.trapped_fraction = np.asarray(self.trapped_fraction, dtype=float)
        n = len(self.times)
        if not (len(self.photon_number) == len(self.n_eff) == len(self.trapped_fraction) == n):
            raise ValueError("trace arrays must have equal length")
        if np.any(self.photon_number < 0):
            raise ValueError("photon numbers must be >= 0")

    def __len__(self):
        return len(self.times)

    @property
    def transmission_norm(self) -> np.ndarray:
        if not self.empty_level > 0:
            return np.full_like(self.photon_number, np.nan)
        return self.photon_number / self.empty_level


def average_traces(traces: Sequence[TransmissionTrace]) -> TransmissionTrace:
    """Pointwise mean of traces sharing one time grid."""
    if not traces:
        raise ValueError("no traces to average")
    first = traces[0]
    for tr in traces[1:]:
        if tr.times.shape != first.times.shape or not np.array_equal(tr.times, first.times):
            raise ValueError("traces have mismatched time grids")
    return TransmissionTrace(
        times=first.times.copy(),
        photon_number=np.mean([t.photon_number for t in traces], axis=0),
        n_eff=np.mean([t.n_eff for t in traces], axis=0),
        trapped_fraction=np.mean([t.trapped_fraction for t in traces], axis=0),
        empty_level=first.empty_level,
        search_from=first.search_from,
        meta={"n_traces": len(traces)},
    )


def extract_trapping_time(
    trace: TransmissionTrace, tail_fraction: float = 0.1
) -> Optional[float]:
    """Interval (ms) from the transmission maximum to the half-way crossing.

    The lower reference is the empty-cavity level, estimated as the median of
    the last ``tail_fraction`` of the record.  The crossing time is linearly
    interpolated between samples.  Returns None when the trace never falls
    to the midpoint after its maximum.
    """
    t = trace.times
    p = trace.photon_number
    window = np.nonzero(t >= trace.search_from)[0]
    if len(window) < 2:
        return None
    n_tail = max(1, int(round(tail_fraction * len(t))))
    p_min = float(np.median(p[-n_tail:]))
    i_max = int(window[np.argmax(p[window])])
    p_max = float(p[i_max])
    if p_max <= p_min:
        return None
    mid = 0.5 * (p_max + p_min)
    below = np.nonzero(p[i_max + 1 :] <= mid)[0]
    if len(below) == 0:
        return None
    j = i_max + 1 + int(below[0])
    p0, p1 = p[j - 1], p[j]
    t_cross = t[j - 1] + (p0 - mid) / (p0 - p1) * (t[j] - t[j - 1])
    return float(t_cross - t[i_max])
