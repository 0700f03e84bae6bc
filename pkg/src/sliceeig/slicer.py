"""Partition an interval into slices holding roughly equal eigenvalue counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dos import DosCurve
from .errors import SliceEigError


@dataclass
class SliceSet:
    breakpoints: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.breakpoints.size < 2 or np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing with at least one slice")
        if self.counts.size != self.breakpoints.size - 1:
            raise ValueError("need one count per slice")

    @property
    def ns(self):
        return self.counts.size

    def intervals(self):
        b = self.breakpoints
        return [(float(b[i]), float(b[i + 1])) for i in range(self.ns)]

    def as_table(self):
        return [
            {"lo": lo, "hi": hi, "est_count": float(c)}
            for (lo, hi), c in zip(self.intervals(), self.counts)
        ]


def slice_spectrum(curve: DosCurve, interval, ns) -> SliceSet:
    """Split ``interval`` into ``ns`` slices of equal estimated eigenvalue count.

    The curve is resampled on its own grid points inside the interval (plus
    the two endpoints); breakpoint ``i`` is the first grid point whose
    cumulative trapezoid mass reaches ``i/ns`` of the total.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if ns < 1:
        raise SliceEigError("ns must be at least 1")
    if not lo < hi:
        raise SliceEigError(f"empty interval [{lo}, {hi}]")
    a, b = curve.range
    if hi < a or lo > b:
        raise SliceEigError(f"[{lo}, {hi}] is outside the curve range [{a}, {b}]")
    x, y = curve.xdos, curve.ydos
    inside = (x > lo) & (x < hi)
    xs = np.concatenate([[lo], x[inside], [hi]])
    ys = np.interp(xs, x, y, left=0.0, right=0.0)
    if ns - 1 > xs.size - 2:
        raise SliceEigError(f"ns={ns} exceeds the {xs.size - 2} interior grid points")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))]) * curve.n
    total = cum[-1]
    bps = [lo]
    for i in range(1, ns):
        target = total * i / ns
        j = int(np.searchsorted(cum, target, side="left"))
        # keep breakpoints strictly increasing and interior
        j = min(max(j, 1), xs.size - 2)
        prev = int(np.searchsorted(xs, bps[-1], side="right"))
        j = max(j, prev)
        if j > xs.size - 1 - (ns - i):
            j = xs.size - 1 - (ns - i)
        bps.append(float(xs[j]))
    bps.append(hi)
    bps = np.array(bps)
    idx = np.searchsorted(xs, bps)
    counts = np.diff(cum[idx])
    return SliceSet(bps, counts)
