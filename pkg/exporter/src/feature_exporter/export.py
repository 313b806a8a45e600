"""Batch export of stimulus images to FVOL volumes plus a manifest.

For every image in a directory the backbone's activation volume is
written to ``<out>/features/<stem>.fvol`` and a manifest record with the
image's pixel size and viewing duration is appended.  The manifest JSON
and every volume are written atomically.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from feature_exporter.backbone import (
    DEFAULT_LAYERS,
    activation_volume,
    expected_channels,
    load_backbone,
)
from feature_exporter.fvol import write_fvol

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
DEFAULT_VIEWING_DURATION = 3.0


class ExportError(ValueError):
    """Raised for unreadable inputs or malformed sidecar configuration."""


@dataclass(frozen=True)
class DurationsConfig:
    default: float
    per_image: dict[str, float]

    def for_image(self, filename: str) -> float:
        return self.per_image.get(filename, self.default)


def load_durations_config(path: Optional[str]) -> DurationsConfig:
    """Sidecar JSON: {"default": seconds, "per_image": {filename: seconds}}."""
    if path is None:
        return DurationsConfig(DEFAULT_VIEWING_DURATION, {})
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}: invalid JSON ({exc.msg})") from exc
    unknown = set(doc) - {"default", "per_image"}
    if unknown:
        raise ExportError(f"{path}: unknown keys {sorted(unknown)}")
    default = float(doc.get("default", DEFAULT_VIEWING_DURATION))
    per_image = {str(k): float(v) for k, v in doc.get("per_image", {}).items()}
    for name, value in [("default", default), *per_image.items()]:
        if value <= 0:
            raise ExportError(f"{path}: non-positive duration for {name!r}")
    return DurationsConfig(default, per_image)


def _list_images(image_dir: str) -> list[str]:
    try:
        names = sorted(os.listdir(image_dir))
    except OSError as exc:
        raise ExportError(f"cannot list {image_dir}: {exc}") from exc
    picked = [n for n in names if n.lower().endswith(IMAGE_EXTENSIONS)]
    if not picked:
        raise ExportError(f"no images ({'/'.join(IMAGE_EXTENSIONS)}) in {image_dir}")
    return picked


def _read_rgb(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise ExportError(f"unreadable image {path}: {exc}") from exc


def _write_json_atomic(doc, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def export_features(
    image_dir: str,
    out_dir: str,
    layers: Sequence[str] = DEFAULT_LAYERS,
    resize: Optional[tuple[int, int]] = None,
    durations_config: Optional[str] = None,
) -> str:
    """Export every image in ``image_dir``; returns the manifest path.

    ``layers`` selects the activation maps to concatenate, ``resize``
    forces the common (height, width) grid, and ``durations_config``
    points at the sidecar JSON with viewing durations.
    """
    n_channels = expected_channels(layers)
    durations = load_durations_config(durations_config)
    names = _list_images(image_dir)
    model = load_backbone()

    features_dir = os.path.join(out_dir, "features")
    os.makedirs(features_dir, exist_ok=True)
    records = []
    for name in names:
        stem = os.path.splitext(name)[0]
        image = _read_rgb(os.path.join(image_dir, name))
        volume = activation_volume(model, image, layers, grid=resize)
        if volume.shape[2] != n_channels:
            raise ExportError(
                f"{name}: got {volume.shape[2]} channels, expected {n_channels}"
            )
        rel = os.path.join("features", f"{stem}.fvol")
        write_fvol(volume, os.path.join(out_dir, rel))
        records.append(
            {
                "id": stem,
                "width": int(image.shape[1]),
                "height": int(image.shape[0]),
                "viewing_duration": durations.for_image(name),
                "feature_path": rel,
            }
        )
        log.info("exported %s -> %s (%dx%dx%d)", name, rel, *volume.shape)

    manifest_path = os.path.join(out_dir, "manifest.json")
    _write_json_atomic(records, manifest_path)
    return manifest_path
