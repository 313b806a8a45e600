"""Scanpath similarity metrics.

Four families: vector-based alignment over saccades (multimatch), grid
symbol alignment with a distance-graded substitution matrix (scanmatch),
cluster-symbol alignment against data-driven fixation clusters (sequence
score), and plain edit distance over grid symbols (string edit distance).
All similarity variants are symmetric in their two scanpaths.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import Scanpath, Stimulus

MM_COMPONENTS = ("shape", "length", "direction", "position", "duration")


@dataclass(frozen=True)
class MmScores:
    shape: float
    length: float
    direction: float
    position: float
    duration: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in MM_COMPONENTS}


@dataclass(frozen=True)
class ScanMatchConfig:
    bins_long: int = 14
    bins_short: int = 8
    temporal_bin: float = 0.050
    gap_penalty: float = 0.0


@dataclass(frozen=True)
class FixationClusters:
    centers: np.ndarray  # (M, 2) pixel coordinates
    radius: float


# ---------------------------------------------------------------------------
# multimatch


def _saccades(sp: Scanpath) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Saccade vectors, their start positions, and start-fixation durations."""
    pos = sp.positions()
    vec = np.diff(pos, axis=0)
    durs = sp.taus()[:-1]
    return vec, pos[:-1].copy(), durs.copy()


def _angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Unsigned angle between two vectors in [0, pi]; zero vectors give 0."""
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    if cross == 0.0 and dot == 0.0:
        return 0.0
    return abs(math.atan2(cross, dot))


def _simplify(vec, start, durs, t_dir, t_amp, t_dur):
    """Merge saccade pairs by direction or amplitude across brief fixations.

    Direction pass: consecutive saccades whose directions differ by less
    than t_dir merge when the fixation between them is shorter than t_dur.
    Amplitude pass: consecutive saccades both shorter than t_amp merge under
    the same duration condition.  Passes alternate until a fixed point.
    """
    vec, start, durs = list(vec), list(start), list(durs)

    def one_pass(mergeable) -> bool:
        changed = False
        i = 0
        while i < len(vec) - 1:
            if durs[i + 1] < t_dur and mergeable(i):
                vec[i] = vec[i] + vec[i + 1]
                del vec[i + 1], start[i + 1], durs[i + 1]
                changed = True
            else:
                i += 1
        return changed

    while True:
        merged_dir = one_pass(lambda i: _angle_between(vec[i], vec[i + 1]) < t_dir)
        merged_amp = one_pass(
            lambda i: np.hypot(*vec[i]) < t_amp and np.hypot(*vec[i + 1]) < t_amp
        )
        if not (merged_dir or merged_amp):
            return np.array(vec), np.array(start), np.array(durs)


def _align(cost: np.ndarray) -> list[tuple[int, int]]:
    """Cheapest monotone path through the cost lattice via Dijkstra.

    Moves are right, down, and diagonal; each step pays the target cell.
    Returns the visited cells from (0, 0) to the opposite corner.
    """
    n, m = cost.shape
    dist = np.full((n, m), np.inf)
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    dist[0, 0] = cost[0, 0]
    heap = [(dist[0, 0], (0, 0))]
    while heap:
        d, (i, j) = heapq.heappop(heap)
        if d > dist[i, j]:
            continue
        if (i, j) == (n - 1, m - 1):
            break
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m and d + cost[ni, nj] < dist[ni, nj]:
                dist[ni, nj] = d + cost[ni, nj]
                prev[(ni, nj)] = (i, j)
                heapq.heappush(heap, (dist[ni, nj], (ni, nj)))
    path = [(n - 1, m - 1)]
    while path[-1] != (0, 0):
        path.append(prev[path[-1]])
    return path[::-1]


def multimatch(
    a: Scanpath,
    b: Scanpath,
    stim: Stimulus,
    direction_threshold: float = 45.0,
    amplitude_fraction: float = 0.10,
    duration_fraction: float = 0.3,
) -> MmScores:
    """Five-component scanpath similarity over aligned saccade pairs.

    Saccade sequences are simplified (thresholds: direction in degrees,
    amplitude as a fraction of the screen diagonal, duration as a fraction
    of each scanpath's longest fixation), aligned by the cheapest path
    through the vector-difference lattice, and compared per aligned pair;
    each component is the average over aligned pairs, in [0, 1].
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError("multimatch needs at least two fixations per scanpath")
    diag = stim.diagonal
    t_dir = math.radians(direction_threshold)
    t_amp = amplitude_fraction * diag
    va, pa, da = _simplify(*_saccades(a), t_dir, t_amp, duration_fraction * max(a.taus()))
    vb, pb, db = _simplify(*_saccades(b), t_dir, t_amp, duration_fraction * max(b.taus()))
    cost = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
    pairs = _align(cost)

    shape, length, direction, position, duration = [], [], [], [], []
    for i, j in pairs:
        shape.append(1.0 - np.linalg.norm(va[i] - vb[j]) / (2.0 * diag))
        length.append(
            1.0 - abs(np.linalg.norm(va[i]) - np.linalg.norm(vb[j])) / diag
        )
        direction.append(1.0 - _angle_between(va[i], vb[j]) / math.pi)
        position.append(1.0 - np.linalg.norm(pa[i] - pb[j]) / diag)
        duration.append(1.0 - abs(da[i] - db[j]) / max(da[i], db[j]))
    return MmScores(
        shape=float(np.mean(shape)),
        length=float(np.mean(length)),
        direction=float(np.mean(direction)),
        position=float(np.mean(position)),
        duration=float(np.mean(duration)),
    )


# ---------------------------------------------------------------------------
# scanmatch


def _grid_shape(stim: Stimulus, cfg: ScanMatchConfig) -> tuple[int, int]:
    """(nx, ny): the longer image dimension gets the finer binning."""
    if stim.width >= stim.height:
        return cfg.bins_long, cfg.bins_short
    return cfg.bins_short, cfg.bins_long


def _bin_index(value: float, extent: float, n: int) -> int:
    return min(max(int(value / extent * n), 0), n - 1)


def _repeat_count(tau: float, temporal_bin: float) -> int:
    return max(1, math.ceil(tau / temporal_bin - 1e-9))


def _sm_encode(
    sp: Scanpath, stim: Stimulus, nx: int, ny: int, temporal_bin: float, with_duration: bool
) -> np.ndarray:
    symbols = []
    for f in sp.fixations:
        sym = (_bin_index(f.x, stim.width, nx), _bin_index(f.y, stim.height, ny))
        symbols.extend([sym] * (_repeat_count(f.tau, temporal_bin) if with_duration else 1))
    return np.array(symbols, dtype=float).reshape(-1, 2)


def _nw_score(sub: np.ndarray, gap: float) -> float:
    """Needleman-Wunsch global alignment score (maximized).

    Row by row, the diagonal and delete moves give per-cell candidates; the
    insert move is a running maximum along the row, which (after removing
    the linear gap drift) is a prefix-maximum scan.
    """
    n, m = sub.shape
    js = np.arange(1, m + 1, dtype=float)
    f = gap * np.arange(m + 1, dtype=float)
    for i in range(1, n + 1):
        cand = np.maximum(f[:-1] + sub[i - 1], f[1:] + gap)
        drift = np.maximum.accumulate(np.concatenate(([gap * i], cand - gap * js)))
        f = drift + gap * np.concatenate(([0.0], js))
    return float(f[m])


def scanmatch(
    a: Scanpath,
    b: Scanpath,
    stim: Stimulus,
    cfg: ScanMatchConfig = ScanMatchConfig(),
    with_duration: bool = False,
) -> float:
    """Grid-symbol alignment similarity in [0, 1].

    Fixations map to grid cells; with durations each symbol repeats once per
    started temporal bin.  Substitution score is the grid diameter minus the
    inter-cell distance (in cell units), gaps pay ``cfg.gap_penalty``, and
    the alignment score is normalized by the diameter times the longer
    encoded sequence.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("scanmatch needs non-empty scanpaths")
    nx, ny = _grid_shape(stim, cfg)
    sa = _sm_encode(a, stim, nx, ny, cfg.temporal_bin, with_duration)
    sb = _sm_encode(b, stim, nx, ny, cfg.temporal_bin, with_duration)
    d_max = math.hypot(nx - 1, ny - 1)
    sub = d_max - np.linalg.norm(sa[:, None, :] - sb[None, :, :], axis=2)
    score = _nw_score(sub, cfg.gap_penalty)
    return score / (d_max * max(len(sa), len(sb)))


# ---------------------------------------------------------------------------
# sequence score


def build_clusters(
    scanpaths: Sequence[Scanpath], stim: Stimulus, bandwidth: float | None = None
) -> FixationClusters:
    """Mean-shift (flat kernel) clustering of fixation positions.

    The default bandwidth is a tenth of the screen diagonal; converged modes
    closer than half a bandwidth apart are merged.
    """
    pts = np.concatenate([sp.positions() for sp in scanpaths]) if scanpaths else np.empty((0, 2))
    if pts.size == 0:
        raise ValueError("no fixations to cluster")
    bw = bandwidth if bandwidth is not None else 0.1 * stim.diagonal
    modes = []
    for seed_pt in pts:
        c = seed_pt.astype(float)
        for _ in range(200):
            inside = pts[np.linalg.norm(pts - c, axis=1) <= bw]
            nxt = inside.mean(axis=0)
            if np.linalg.norm(nxt - c) < 1e-4:
                c = nxt
                break
            c = nxt
        modes.append(c)
    centers: list[np.ndarray] = []
    for m in modes:
        if all(np.linalg.norm(m - c) >= bw / 2.0 for c in centers):
            centers.append(m)
    return FixationClusters(centers=np.array(centers), radius=bw)


def _cluster_ids(sp: Scanpath, clusters: FixationClusters) -> list[int]:
    pos = sp.positions()
    d = np.linalg.norm(pos[:, None, :] - clusters.centers[None, :, :], axis=2)
    return [int(i) for i in d.argmin(axis=1)]


def sequence_score(
    a: Scanpath,
    b: Scanpath,
    clusters: FixationClusters,
    with_duration: bool = False,
    temporal_bin: float = 0.050,
) -> float:
    """Cluster-id alignment similarity in [0, 1].

    Each fixation becomes the id of its nearest cluster centre (repeated per
    started temporal bin when durations are used); matches score 1,
    mismatches and gaps 0, normalized by the longer encoded sequence.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("sequence score needs non-empty scanpaths")

    def encode(sp: Scanpath) -> np.ndarray:
        ids = []
        for f, cid in zip(sp.fixations, _cluster_ids(sp, clusters)):
            n = _repeat_count(f.tau, temporal_bin) if with_duration else 1
            ids.extend([cid] * n)
        return np.array(ids)

    sa, sb = encode(a), encode(b)
    sub = (sa[:, None] == sb[None, :]).astype(float)
    score = _nw_score(sub, 0.0)
    return score / max(len(sa), len(sb))


# ---------------------------------------------------------------------------
# string edit distance


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Classic edit distance (insert, delete, substitute, unit costs)."""
    n, m = len(a), len(b)
    d = np.arange(m + 1)
    for i in range(1, n + 1):
        prev_diag = d[0]
        d[0] = i
        for j in range(1, m + 1):
            cur = d[j]
            d[j] = min(
                d[j] + 1,
                d[j - 1] + 1,
                prev_diag + (0 if a[i - 1] == b[j - 1] else 1),
            )
            prev_diag = cur
    return int(d[m])


def string_edit_distance(
    a: Scanpath, b: Scanpath, stim: Stimulus, grid_n: int = 5
) -> int:
    """Edit distance between scanpaths encoded on an n-by-n grid."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("string edit distance needs non-empty scanpaths")

    def encode(sp: Scanpath) -> list[int]:
        return [
            _bin_index(f.y, stim.height, grid_n) * grid_n
            + _bin_index(f.x, stim.width, grid_n)
            for f in sp.fixations
        ]

    return levenshtein(encode(a), encode(b))
