"""Saliency maps from fixations and the standard fixation-prediction scores.

A saliency map is a non-negative pixel grid summing to one, built by
dropping an isotropic Gaussian (truncated at four standard deviations) on
every fixation.  Scores: histogram KL divergence against a ground-truth
map, shuffled-free AUC over fixated pixels, and normalized scanpath
saliency.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SaliencyMap:
    width: int
    height: int
    values: np.ndarray  # (height, width), non-negative, sums to 1

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"map shape {self.values.shape} does not match "
                f"({self.height}, {self.width})"
            )


def saliency_from_fixations(
    fixations: Sequence[tuple[float, float]],
    width: int,
    height: int,
    sigma: float = 24.0,
) -> SaliencyMap:
    """Sum of per-fixation Gaussians, truncated at radius 4*sigma, normalized.

    Pixels are sampled at integer coordinates; fixations may be fractional.
    """
    if not len(fixations):
        raise ValueError("no fixations")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    values = np.zeros((height, width))
    radius = 4.0 * sigma
    r_int = int(math.ceil(radius))
    for fx, fy in fixations:
        x0, x1 = max(0, int(math.floor(fx - r_int))), min(width - 1, int(math.ceil(fx + r_int)))
        y0, y1 = max(0, int(math.floor(fy - r_int))), min(height - 1, int(math.ceil(fy + r_int)))
        if x0 > x1 or y0 > y1:
            continue
        xs = np.arange(x0, x1 + 1, dtype=float)
        ys = np.arange(y0, y1 + 1, dtype=float)
        d2 = (xs[None, :] - fx) ** 2 + (ys[:, None] - fy) ** 2
        patch = np.where(d2 <= radius * radius, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
        values[y0 : y1 + 1, x0 : x1 + 1] += patch
    total = values.sum()
    if total <= 0:
        raise ValueError("all fixations fall outside the map")
    return SaliencyMap(width=width, height=height, values=values / total)


def saliency_kl(pred: SaliencyMap, gt: SaliencyMap, epsilon: float = 1e-10) -> float:
    """KL(gt || pred) in nats, both maps smoothed and renormalized.

    Identical maps score exactly zero.
    """
    if pred.values.shape != gt.values.shape:
        raise ValueError("maps have different shapes")
    p = gt.values + epsilon
    q = pred.values + epsilon
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))


def _fixation_pixels(
    fixations: Sequence[tuple[float, float]], width: int, height: int
) -> np.ndarray:
    idx = []
    for fx, fy in fixations:
        ix = min(max(int(round(fx)), 0), width - 1)
        iy = min(max(int(round(fy)), 0), height - 1)
        idx.append((iy, ix))
    return np.array(idx, dtype=int)


def auc_judd(pred: SaliencyMap, fixations: Sequence[tuple[float, float]]) -> float:
    """ROC area with fixated pixels as positives and thresholds at their values.

    All non-fixated pixels are negatives; no centre-bias sampling.  A map
    that is maximal exactly at the fixations scores 1; a constant map 0.5.
    """
    if not len(fixations):
        raise ValueError("no fixations")
    values = pred.values
    pix = _fixation_pixels(fixations, pred.width, pred.height)
    fix_mask = np.zeros(values.shape, dtype=bool)
    fix_mask[pix[:, 0], pix[:, 1]] = True
    pos = values[fix_mask]
    neg = values[~fix_mask]
    if neg.size == 0:
        return 1.0
    points = [(0.0, 0.0)]
    for thresh in np.sort(np.unique(pos))[::-1]:
        tp = float(np.mean(pos >= thresh))
        fp = float(np.mean(neg >= thresh))
        points.append((fp, tp))
    points.append((1.0, 1.0))
    points.sort()
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.trapezoid(ys, xs))


def nss(pred: SaliencyMap, fixations: Sequence[tuple[float, float]]) -> float:
    """Mean z-scored saliency at fixated pixels; constant maps score 0."""
    if not len(fixations):
        raise ValueError("no fixations")
    std = float(pred.values.std())
    if std == 0.0:
        return 0.0
    z = (pred.values - pred.values.mean()) / std
    pix = _fixation_pixels(fixations, pred.width, pred.height)
    return float(z[pix[:, 0], pix[:, 1]].mean())


def write_pgm(map_: SaliencyMap, path: str) -> None:
    """Binary PGM (P5), max-normalized to the 8-bit range."""
    peak = map_.values.max()
    scaled = map_.values / peak if peak > 0 else map_.values
    img = np.round(scaled * 255.0).astype(np.uint8)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{map_.width} {map_.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    os.replace(tmp, path)
