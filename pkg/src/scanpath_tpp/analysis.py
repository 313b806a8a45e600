"""Exploratory statistics over scanpath collections.

Density histograms of fixation durations and saccade amplitudes, and
return-fixation analysis (fixations that revisit a previously fixated
location after at least one intervening fixation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .datamodel import Scanpath


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray  # (bins + 1,)
    density: np.ndarray  # (bins,), integrates to 1 over the range

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_left,bin_right,density\n")
            for left, right, d in zip(self.edges[:-1], self.edges[1:], self.density):
                fh.write(f"{float(left)!r},{float(right)!r},{float(d)!r}\n")


@dataclass(frozen=True)
class RfDistribution:
    offsets: np.ndarray  # (max_offset,) frequencies over offsets 1..max_offset
    mean_per_scanpath: float


def duration_histogram(
    scanpaths: Sequence[Scanpath],
    bins: int = 25,
    value_range: Optional[tuple[float, float]] = None,
) -> Histogram:
    """Density histogram of all inter-event times, pooled over scanpaths."""
    taus = np.concatenate([sp.taus() for sp in scanpaths]) if scanpaths else np.empty(0)
    return _density_histogram(taus, bins, value_range, "durations")


def amplitude_histogram(
    scanpaths: Sequence[Scanpath],
    bins: int = 25,
    value_range: Optional[tuple[float, float]] = None,
    px_per_degree: Optional[float] = None,
) -> Histogram:
    """Density histogram of saccade amplitudes, in pixels by default.

    Pass ``px_per_degree`` to convert amplitudes to degrees of visual angle.
    Scanpaths with a single fixation contribute no amplitudes.
    """
    amps = []
    for sp in scanpaths:
        if len(sp) >= 2:
            amps.append(np.linalg.norm(np.diff(sp.positions(), axis=0), axis=1))
    pooled = np.concatenate(amps) if amps else np.empty(0)
    if px_per_degree is not None:
        pooled = pooled / px_per_degree
    return _density_histogram(pooled, bins, value_range, "amplitudes")


def _density_histogram(values, bins, value_range, what) -> Histogram:
    if len(values) == 0:
        raise ValueError(f"no {what} to histogram")
    if value_range is None:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        value_range = (lo, hi)
    density, edges = np.histogram(values, bins=bins, range=value_range, density=True)
    return Histogram(edges=edges, density=density)


def return_fixations(sp: Scanpath, radius: float = 50.0) -> list[tuple[int, int]]:
    """Indices and offsets of fixations revisiting an earlier location.

    Fixation n is a return when some earlier fixation k (with at least one
    fixation between them) lies within ``radius`` pixels; the earliest such
    k counts, and the offset is the number of intervening fixations n-k-1.
    """
    pos = sp.positions()
    out = []
    for n in range(2, len(pos)):
        dists = np.linalg.norm(pos[: n - 1] - pos[n], axis=1)
        hits = np.flatnonzero(dists <= radius)
        if hits.size:
            k = int(hits[0])
            out.append((n, n - k - 1))
    return out


def rf_distribution(
    scanpaths: Sequence[Scanpath],
    radius: float = 50.0,
    max_offset: int = 10,
) -> RfDistribution:
    """Pooled return-fixation offset frequencies and mean returns per scanpath.

    The offset histogram covers offsets 1..max_offset and is normalized over
    the returns that fall in that range; the rate counts all returns.
    """
    if not scanpaths:
        raise ValueError("no scanpaths")
    counts = np.zeros(max_offset)
    total_returns = 0
    for sp in scanpaths:
        rf = return_fixations(sp, radius=radius)
        total_returns += len(rf)
        for _, offset in rf:
            if 1 <= offset <= max_offset:
                counts[offset - 1] += 1
    freq = counts / counts.sum() if counts.sum() > 0 else counts
    return RfDistribution(offsets=freq, mean_per_scanpath=total_returns / len(scanpaths))
