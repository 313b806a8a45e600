"""Cross-package format conformance: the modelling package must read
every file this exporter writes.

The golden file is checked into the repository; its checksum pins the
byte-level format.  These tests also cover the full-size channel count on
a real image, which makes them the acceptance gate for this package.
"""

import hashlib
import json
import os

import numpy as np
import pytest

from feature_exporter.export import export_features
from feature_exporter.toyfeatures import export_toy_features

# the consumer package, installed separately; only its public readers are used
from scanpath_tpp.datamodel import load_feature_volume, load_stimulus_manifest

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")
GOLDEN_PATH = os.path.join(GOLDEN_DIR, "golden.fvol")
GOLDEN_SHA256 = "45223d8a9e949a0763fd6826945cb7f196edbb61bd9b72ad7a1aa967df1d82c6"
GOLDEN_ARGS = dict(n=1, resolution=(6, 8), seed=123, channels=3)


def test_golden_file_checksum_is_stable():
    raw = open(GOLDEN_PATH, "rb").read()
    assert hashlib.sha256(raw).hexdigest() == GOLDEN_SHA256


def test_writer_still_reproduces_the_golden_bytes(tmp_path):
    records = export_toy_features(out_dir=str(tmp_path), **GOLDEN_ARGS)
    assert open(records[0].path, "rb").read() == open(GOLDEN_PATH, "rb").read()


def test_consumer_loads_the_golden_file():
    vol = load_feature_volume(GOLDEN_PATH)
    assert (vol.height, vol.width, vol.channels) == (6, 8, 3)
    assert vol.data.dtype == np.float32
    assert np.isfinite(vol.data).all()
    # the blob channel peaks at the planted cell recorded at creation time
    peak = np.unravel_index(np.argmax(vol.data[:, :, 0]), (6, 8))
    assert tuple(peak) == (0, 5)


def test_consumer_loads_a_real_image_export_with_full_channel_count(
    image_dir, tmp_path
):
    out = str(tmp_path / "out")
    manifest_path = export_features(image_dir, out)
    stimuli = load_stimulus_manifest(manifest_path)
    assert sorted(stimuli) == ["black", "scene"]
    scene = stimuli["scene"]
    assert (scene.width, scene.height) == (128, 96)
    path = os.path.join(out, scene.feature_path)
    vol = load_feature_volume(path)
    assert vol.channels == 2048
    assert np.isfinite(vol.data).all()
    # both packages' readers must decode the same bytes to the same cells
    from feature_exporter.fvol import read_fvol

    np.testing.assert_array_equal(vol.data, read_fvol(path))
