"""Synthetic toy volumes: determinism, dimensions, planted structure."""

import numpy as np
import pytest

from feature_exporter.fvol import read_fvol
from feature_exporter.toyfeatures import export_toy_features


def test_same_seed_gives_byte_identical_files(tmp_path):
    a = export_toy_features(3, (5, 7), 42, str(tmp_path / "a"))
    b = export_toy_features(3, (5, 7), 42, str(tmp_path / "b"))
    for ra, rb in zip(a, b):
        assert open(ra.path, "rb").read() == open(rb.path, "rb").read()
        assert ra.blob_cell == rb.blob_cell


def test_different_seeds_differ(tmp_path):
    a = export_toy_features(2, (5, 7), 1, str(tmp_path / "a"))
    b = export_toy_features(2, (5, 7), 2, str(tmp_path / "b"))
    assert any(
        open(ra.path, "rb").read() != open(rb.path, "rb").read()
        for ra, rb in zip(a, b)
    )


def test_header_dimensions_as_requested(tmp_path):
    records = export_toy_features(2, (9, 4), 0, str(tmp_path), channels=5)
    for rec in records:
        vol = read_fvol(rec.path)
        assert vol.shape == (9, 4, 5)
        assert np.isfinite(vol).all()


def test_blob_argmax_at_planted_cell(tmp_path):
    for rec in export_toy_features(6, (10, 12), 7, str(tmp_path)):
        vol = read_fvol(rec.path)
        peak = np.unravel_index(np.argmax(vol[:, :, 0]), vol.shape[:2])
        assert tuple(peak) == rec.blob_cell


def test_invalid_arguments_rejected(tmp_path):
    with pytest.raises(ValueError):
        export_toy_features(0, (4, 4), 0, str(tmp_path))
    with pytest.raises(ValueError):
        export_toy_features(1, (0, 4), 0, str(tmp_path))
    with pytest.raises(ValueError):
        export_toy_features(1, (4, 4), 0, str(tmp_path), channels=0)
