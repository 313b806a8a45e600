"""Seeded synthetic feature volumes for tests and desk-scale runs.

Each toy volume plants a Gaussian "object blob" in channel 0 at a random
cell, with low-amplitude smooth noise in the remaining channels, so a
consumer can verify spatial structure (the blob's argmax) without running
a CNN.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from feature_exporter.fvol import write_fvol


@dataclass(frozen=True)
class ToyVolume:
    path: str
    blob_cell: tuple[int, int]  # (row, column) of the planted peak


def export_toy_features(
    n: int,
    resolution: tuple[int, int],
    seed: int,
    out_dir: str,
    channels: int = 4,
) -> list[ToyVolume]:
    """Write ``n`` FVOL files named toy000.fvol.. and return their records.

    The same (n, resolution, seed, channels) always produces byte-identical
    files.  Channel 0 carries the blob; its argmax is the planted cell.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    height, width = resolution
    if height <= 0 or width <= 0:
        raise ValueError("resolution must be positive")
    if channels < 1:
        raise ValueError("at least one channel is required")
    os.makedirs(out_dir, exist_ok=True)
    sigma = 0.15 * min(height, width) + 0.5
    ys, xs = np.mgrid[0:height, 0:width]
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        cy, cx = int(rng.integers(height)), int(rng.integers(width))
        blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma * sigma))
        noise = rng.uniform(0.0, 0.3, size=(height, width, channels - 1))
        volume = np.concatenate([blob[:, :, None], noise], axis=2).astype(np.float32)
        path = os.path.join(out_dir, f"toy{i:03d}.fvol")
        write_fvol(volume, path)
        out.append(ToyVolume(path=path, blob_cell=(cy, cx)))
    return out
