"""Writer and reader for the FVOL binary interchange format.

An FVOL file is a fixed header followed by raw cell values:

    bytes 0..3    magic b"FVOL"
    bytes 4..19   four little-endian uint32: version (1), height, width,
                  channels
    bytes 20..    height * width * channels float32 values, little-endian,
                  row-major with the channel index varying fastest

The scanpath modelling package reads the same layout; the two packages
share nothing but this format, so the constants are spelled out here
rather than imported.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"FVOL"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FvolError(ValueError):
    """Raised for malformed FVOL data on either side of a round trip."""


def write_fvol(data: np.ndarray, path: str) -> None:
    """Write a (height, width, channels) float array atomically.

    Values are stored as little-endian float32; the payload round-trips
    bit-exactly for float32 input.
    """
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise FvolError(f"expected a (height, width, channels) array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise FvolError("refusing to write non-finite feature values")
    height, width, channels = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, height, width, channels))
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def read_fvol(path: str) -> np.ndarray:
    """Read an FVOL file back into a (height, width, channels) float32 array."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FvolError(f"{path}: truncated header")
        magic, version, height, width, channels = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FvolError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FvolError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = height * width * channels * 4
    if len(payload) != expected:
        raise FvolError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(height, width, channels).copy()
