"""DenseNet201 activation extraction.

The backbone is torchvision's DenseNet201 run in eval mode.  Named
activation maps are collected with forward hooks, bilinearly resized to a
common grid, and concatenated along the channel axis.  The default layer
set (the first transition layer plus the final batch-norm output) totals
2,048 channels.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
from torch import nn
from torchvision.models import DenseNet201_Weights, densenet201

log = logging.getLogger(__name__)

# channel widths of the activation maps this exporter knows how to tap,
# keyed by their submodule name under model.features
LAYER_CHANNELS = {
    "transition1": 128,
    "transition2": 256,
    "transition3": 896,
    "norm5": 1920,
}

DEFAULT_LAYERS = ("transition1", "norm5")  # 128 + 1920 = 2048 channels

# ImageNet statistics used by the pretrained weights
_MEAN = (0.485, 0.456, 0.406)
_STD = (0.229, 0.224, 0.225)


def expected_channels(layers: Sequence[str]) -> int:
    unknown = [name for name in layers if name not in LAYER_CHANNELS]
    if unknown:
        raise ValueError(
            f"unknown layer(s) {unknown}; available: {sorted(LAYER_CHANNELS)}"
        )
    if not layers:
        raise ValueError("at least one layer is required")
    return sum(LAYER_CHANNELS[name] for name in layers)


def load_backbone() -> nn.Module:
    """DenseNet201 in eval mode, pretrained when weights are available.

    When the pretrained weights cannot be fetched (offline environments),
    falls back to a fixed-seed random initialization so exports stay
    deterministic, and logs a warning: features are then structure-only.
    """
    try:
        model = densenet201(weights=DenseNet201_Weights.IMAGENET1K_V1)
    except Exception as exc:  # hub download failures surface as various types
        log.warning(
            "pretrained DenseNet201 weights unavailable (%s); "
            "using a fixed-seed random initialization",
            exc,
        )
        with torch.random.fork_rng():
            torch.manual_seed(0)
            model = densenet201(weights=None)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def _to_tensor(image: np.ndarray) -> torch.Tensor:
    """HWC uint8 RGB to a normalized NCHW float tensor."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB image array, got shape {image.shape}")
    x = torch.tensor(image, dtype=torch.float32) / 255.0
    x = x.permute(2, 0, 1)
    mean = torch.tensor(_MEAN).view(3, 1, 1)
    std = torch.tensor(_STD).view(3, 1, 1)
    return ((x - mean) / std).unsqueeze(0)


def activation_volume(
    model: nn.Module,
    image: np.ndarray,
    layers: Sequence[str] = DEFAULT_LAYERS,
    grid: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """Run one image through the backbone and stack the named activations.

    Maps at coarser strides are bilinearly resized to ``grid`` (default:
    the finest map among the selected layers).  Returns float32 with shape
    (grid_h, grid_w, sum of layer channels).
    """
    want = expected_channels(layers)
    captured: dict[str, torch.Tensor] = {}
    hooks = []
    for name in layers:
        module = getattr(model.features, name)
        hooks.append(
            module.register_forward_hook(
                lambda _m, _i, out, name=name: captured.__setitem__(name, out)
            )
        )
    try:
        with torch.no_grad():
            model(_to_tensor(image))
    finally:
        for h in hooks:
            h.remove()

    maps = [captured[name] for name in layers]
    if grid is None:
        grid = max(((m.shape[2], m.shape[3]) for m in maps), key=lambda s: s[0] * s[1])
    resized = [
        m if (m.shape[2], m.shape[3]) == grid
        else nn.functional.interpolate(m, size=grid, mode="bilinear", align_corners=False)
        for m in maps
    ]
    stacked = torch.cat(resized, dim=1)[0]  # (C, H, W)
    if stacked.shape[0] != want:
        raise RuntimeError(
            f"activation stack has {stacked.shape[0]} channels, expected {want}"
        )
    return stacked.permute(1, 2, 0).numpy().astype(np.float32)
