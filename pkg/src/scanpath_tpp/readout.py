"""Semantic readout: turn a feature volume into a fixed-size embedding z.

The volume is augmented with three coordinate channels, squeezed through a
stack of 1x1 convolutions (channel mixing per cell, widths C_in -> 8 -> 16 -> 1
with softplus after the first two layers), flattened row-major, and projected
linearly to the embedding dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import FeatureVolume

CONV_WIDTHS = (8, 16, 1)


@dataclass(frozen=True)
class ReadoutParams:
    """Weights for the per-cell conv stack and the flatten-projection."""

    w1: np.ndarray  # (8, C_in)
    b1: np.ndarray  # (8,)
    w2: np.ndarray  # (16, 8)
    b2: np.ndarray  # (16,)
    w3: np.ndarray  # (1, 16)
    b3: np.ndarray  # (1,)
    proj_w: np.ndarray  # (d_img, H*W)
    proj_b: np.ndarray  # (d_img,)


def coordconv_augment(volume: FeatureVolume) -> FeatureVolume:
    """Append x, y, r coordinate channels to a feature volume.

    x runs over columns and y over rows, both in [-1, 1]; r is the distance
    from the grid centre scaled so corners sit at 1.  Grids of extent 1 along
    an axis get coordinate 0 there.
    """
    h, w, c = volume.height, volume.width, volume.channels
    xs = np.linspace(-1.0, 1.0, w, dtype=np.float32) if w > 1 else np.zeros(1, np.float32)
    ys = np.linspace(-1.0, 1.0, h, dtype=np.float32) if h > 1 else np.zeros(1, np.float32)
    xg = np.broadcast_to(xs[None, :], (h, w))
    yg = np.broadcast_to(ys[:, None], (h, w))
    rg = np.sqrt(xg.astype(np.float64) ** 2 + yg.astype(np.float64) ** 2) / np.sqrt(2.0)
    extra = np.stack([xg, yg, rg.astype(np.float32)], axis=-1)
    data = np.concatenate([volume.data, extra], axis=-1)
    return FeatureVolume(h, w, c + 3, data.astype(np.float32))


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + exp(x))."""
    return np.logaddexp(0.0, x)


def readout_forward(volume: FeatureVolume, p: ReadoutParams) -> np.ndarray:
    """Compute the embedding z for an (already coordinate-augmented) volume."""
    cells = volume.data.reshape(-1, volume.channels).astype(np.float64)
    if p.w1.shape[1] != volume.channels:
        raise ValueError(
            f"volume has {volume.channels} channels, conv expects {p.w1.shape[1]}"
        )
    if p.proj_w.shape[1] != cells.shape[0]:
        raise ValueError(
            f"volume has {cells.shape[0]} cells, projection expects {p.proj_w.shape[1]}"
        )
    h1 = softplus(cells @ p.w1.T + p.b1)
    h2 = softplus(h1 @ p.w2.T + p.b2)
    gaze_map = (h2 @ p.w3.T + p.b3).reshape(-1)  # row-major flatten of the H*W grid
    return p.proj_w @ gaze_map + p.proj_b
