"""Flat parameter storage with a named-view manifest.

All trainable parameters live in one contiguous float64 array; the manifest
maps names to (offset, shape) so optimizers can treat the model as a single
vector while forward code addresses parameters by name.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ManifestEntry = tuple[str, int, tuple[int, ...]]


@dataclass(frozen=True)
class ParamVector:
    flat: np.ndarray
    manifest: tuple[ManifestEntry, ...]

    def __post_init__(self):
        if self.flat.ndim != 1 or self.flat.dtype != np.float64:
            raise ValueError("flat storage must be a 1-D float64 array")
        offset = 0
        names = set()
        for name, off, shape in self.manifest:
            if name in names:
                raise ValueError(f"duplicate parameter name {name!r}")
            names.add(name)
            if off != offset:
                raise ValueError(f"{name}: offset {off} != expected {offset}")
            offset += int(np.prod(shape, dtype=int))
        if offset != self.flat.size:
            raise ValueError(f"manifest covers {offset} values, flat has {self.flat.size}")

    @property
    def size(self) -> int:
        return self.flat.size

    def names(self) -> list[str]:
        return [name for name, _, _ in self.manifest]

    def view(self, name: str) -> np.ndarray:
        """A reshaped view into the flat storage (shares memory)."""
        for entry_name, offset, shape in self.manifest:
            if entry_name == name:
                n = int(np.prod(shape, dtype=int))
                return self.flat[offset : offset + n].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "ParamVector":
        return ParamVector(self.flat.copy(), self.manifest)

    def with_flat(self, flat: np.ndarray) -> "ParamVector":
        """Same manifest over a different flat array."""
        return ParamVector(np.asarray(flat, dtype=np.float64), self.manifest)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.flat), self.manifest)


def build_manifest(entries: list[tuple[str, tuple[int, ...]]]) -> tuple[ManifestEntry, ...]:
    """Lay out named shapes contiguously, in the given order."""
    manifest = []
    offset = 0
    for name, shape in entries:
        manifest.append((name, offset, tuple(int(d) for d in shape)))
        offset += int(np.prod(shape, dtype=int))
    return tuple(manifest)
