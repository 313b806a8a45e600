"""Binary format writer/reader: layout, round trips, validation."""

import struct

import numpy as np
import pytest

from feature_exporter.fvol import FvolError, read_fvol, write_fvol


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    data = rng.normal(size=(4, 5, 3)).astype(np.float32)
    path = str(tmp_path / "x.fvol")
    write_fvol(data, path)
    np.testing.assert_array_equal(read_fvol(path), data)


def test_exact_binary_layout(tmp_path):
    data = np.arange(12, dtype=np.float32).reshape(1, 2, 6)
    path = str(tmp_path / "x.fvol")
    write_fvol(data, path)
    raw = open(path, "rb").read()
    assert raw[:4] == b"FVOL"
    version, height, width, channels = struct.unpack("<IIII", raw[4:20])
    assert (version, height, width, channels) == (1, 1, 2, 6)
    # row-major, channel fastest: 0..5 for the first cell, 6..11 second
    np.testing.assert_array_equal(
        np.frombuffer(raw[20:], dtype="<f4"), np.arange(12, dtype=np.float32)
    )


def test_write_is_atomic(tmp_path):
    path = str(tmp_path / "x.fvol")
    write_fvol(np.zeros((2, 2, 1), dtype=np.float32), path)
    assert not (tmp_path / "x.fvol.tmp").exists()


def test_rejects_wrong_rank():
    with pytest.raises(FvolError, match="height, width, channels"):
        write_fvol(np.zeros((3, 3)), "/tmp/never.fvol")


def test_rejects_non_finite():
    bad = np.full((1, 1, 2), np.nan, dtype=np.float32)
    with pytest.raises(FvolError, match="non-finite"):
        write_fvol(bad, "/tmp/never.fvol")


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.fvol"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FvolError, match="magic"):
        read_fvol(str(path))


def test_read_rejects_truncated_payload(tmp_path):
    path = str(tmp_path / "short.fvol")
    write_fvol(np.zeros((2, 3, 1), dtype=np.float32), path)
    raw = open(path, "rb").read()
    open(path, "wb").write(raw[:-4])
    with pytest.raises(FvolError, match="payload"):
        read_fvol(path)


def test_read_rejects_unknown_version(tmp_path):
    path = tmp_path / "v9.fvol"
    path.write_bytes(b"FVOL" + struct.pack("<IIII", 9, 1, 1, 1) + b"\x00" * 4)
    with pytest.raises(FvolError, match="version"):
        read_fvol(str(path))
