"""Parsing, preprocessing and binary feature-volume round trips."""

import json
import os
import struct

import numpy as np
import pytest

from scanpath_tpp.datamodel import (
    DataFormatError,
    Dataset,
    FeatureVolume,
    Fixation,
    Scanpath,
    Stimulus,
    load_feature_volume,
    load_stimulus_manifest,
    normalize_scanpath,
    parse_scanpath_dataset,
    preprocess,
    serialize_scanpaths,
    split_by_stimulus,
    write_feature_volume,
)

from tpp_helpers import make_scanpath


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_jsonl_round_trip_preserves_values(tmp_path):
    sps = [
        make_scanpath([10, 20, 30], [5, 6, 7], [0.2, 0.3, 0.25], "a", "o1"),
        make_scanpath([1, 2], [3, 4], [0.5, 0.125], "b", "o2"),
    ]
    path = str(tmp_path / "sp.jsonl")
    serialize_scanpaths(sps, path)
    back = parse_scanpath_dataset(path).scanpaths
    assert len(back) == 2
    for orig, got in zip(sps, back):
        assert got.stimulus_id == orig.stimulus_id
        assert got.observer_id == orig.observer_id
        assert got.fixations == orig.fixations


def test_jsonl_accepts_tau_only_records(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o", "unit": "s",
        "fixations": [{"x": 1, "y": 2, "tau": 0.5}, {"x": 3, "y": 4, "tau": 0.25}],
    }])
    (sp,) = parse_scanpath_dataset(path).scanpaths
    assert sp.fixations[0].t == pytest.approx(0.5)
    assert sp.fixations[1].t == pytest.approx(0.75)


def test_jsonl_derives_taus_from_arrival_times(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o",
        "fixations": [{"x": 1, "y": 2, "t": 0.5}, {"x": 3, "y": 4, "t": 1.25}],
    }])
    (sp,) = parse_scanpath_dataset(path).scanpaths
    assert sp.taus() == pytest.approx([0.5, 0.75])


def test_jsonl_milliseconds_are_scaled(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o", "unit": "ms",
        "fixations": [{"x": 1, "y": 2, "t": 250}, {"x": 3, "y": 4, "t": 600}],
    }])
    (sp,) = parse_scanpath_dataset(path).scanpaths
    assert sp.taus() == pytest.approx([0.25, 0.35])


def test_jsonl_mixed_time_fields_rejected(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o",
        "fixations": [{"x": 1, "y": 2, "t": 0.5}, {"x": 3, "y": 4, "tau": 0.25}],
    }])
    with pytest.raises(DataFormatError, match="all carry"):
        parse_scanpath_dataset(path)


def test_jsonl_bad_json_reports_line(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    with open(path, "w") as fh:
        fh.write('{"stimulus_id": "s", "observer_id": "o", "fixations": [{"x":1,"y":2,"t":1}]}\n')
        fh.write("{oops\n")
    with pytest.raises(DataFormatError, match=":2"):
        parse_scanpath_dataset(path)


@pytest.mark.parametrize("tau", [0.0, -0.5, float("nan")])
def test_non_positive_tau_rejected(tmp_path, tau):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o",
        "fixations": [{"x": 1, "y": 2, "tau": tau}],
    }])
    with pytest.raises(DataFormatError, match="tau"):
        parse_scanpath_dataset(path)


def test_non_increasing_times_rejected(tmp_path):
    # a repeated arrival time implies a zero inter-event time
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o",
        "fixations": [{"x": 1, "y": 2, "t": 0.5}, {"x": 3, "y": 4, "t": 0.5}],
    }])
    with pytest.raises(DataFormatError, match="fixation 1"):
        parse_scanpath_dataset(path)


def test_empty_fixation_list_rejected(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{"stimulus_id": "s", "observer_id": "o", "fixations": []}])
    with pytest.raises(DataFormatError, match="empty"):
        parse_scanpath_dataset(path)


def test_unknown_unit_rejected(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "s", "observer_id": "o", "unit": "min",
        "fixations": [{"x": 1, "y": 2, "t": 1}],
    }])
    with pytest.raises(DataFormatError, match="unit"):
        parse_scanpath_dataset(path)


def test_csv_groups_consecutive_rows(tmp_path):
    path = str(tmp_path / "sp.csv")
    with open(path, "w") as fh:
        fh.write("stimulus_id,observer_id,unit,x,y,tau\n")
        fh.write("a,o1,s,1,2,0.5\n")
        fh.write("a,o1,s,3,4,0.25\n")
        fh.write("a,o2,s,5,6,0.5\n")
    ds = parse_scanpath_dataset(path, fmt="csv")
    assert [len(sp) for sp in ds.scanpaths] == [2, 1]
    assert ds.scanpaths[0].observer_id == "o1"
    assert ds.scanpaths[0].fixations[1].t == pytest.approx(0.75)


def test_csv_with_arrival_times(tmp_path):
    path = str(tmp_path / "sp.csv")
    with open(path, "w") as fh:
        fh.write("stimulus_id,observer_id,unit,x,y,t\n")
        fh.write("a,o1,ms,1,2,100\n")
        fh.write("a,o1,ms,3,4,300\n")
    (sp,) = parse_scanpath_dataset(path, fmt="csv").scanpaths
    assert sp.taus() == pytest.approx([0.1, 0.2])


def test_csv_requires_time_column(tmp_path):
    path = str(tmp_path / "sp.csv")
    with open(path, "w") as fh:
        fh.write("stimulus_id,observer_id,unit,x,y\n")
        fh.write("a,o1,s,1,2\n")
    with pytest.raises(DataFormatError, match="'t' or 'tau'"):
        parse_scanpath_dataset(path, fmt="csv")


def test_unknown_format_rejected(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [])
    with pytest.raises(ValueError, match="format"):
        parse_scanpath_dataset(path, fmt="parquet")


def test_scanpaths_must_resolve_to_known_stimuli(tmp_path):
    path = str(tmp_path / "sp.jsonl")
    write_jsonl(path, [{
        "stimulus_id": "ghost", "observer_id": "o",
        "fixations": [{"x": 1, "y": 2, "t": 1}],
    }])
    stimuli = {"real": Stimulus("real", 100, 100, 3.0)}
    with pytest.raises(DataFormatError, match="ghost"):
        parse_scanpath_dataset(path, stimuli=stimuli)


def test_manifest_round_trip(tmp_path):
    path = str(tmp_path / "manifest.json")
    with open(path, "w") as fh:
        json.dump([
            {"id": "a", "width": 640, "height": 480, "viewing_duration": 3.0,
             "feature_path": "features/a.fvol"},
            {"id": "b", "width": 800, "height": 600, "viewing_duration": 2.5},
        ], fh)
    stimuli = load_stimulus_manifest(path)
    assert stimuli["a"].feature_path == "features/a.fvol"
    assert stimuli["b"].viewing_duration == 2.5
    assert stimuli["a"].diagonal == pytest.approx(800.0)


def test_manifest_duplicate_id_rejected(tmp_path):
    path = str(tmp_path / "manifest.json")
    rec = {"id": "a", "width": 10, "height": 10, "viewing_duration": 1.0}
    with open(path, "w") as fh:
        json.dump([rec, rec], fh)
    with pytest.raises(DataFormatError, match="duplicate"):
        load_stimulus_manifest(path)


def test_manifest_non_positive_dims_rejected(tmp_path):
    path = str(tmp_path / "manifest.json")
    with open(path, "w") as fh:
        json.dump([{"id": "a", "width": 0, "height": 10, "viewing_duration": 1.0}], fh)
    with pytest.raises(DataFormatError, match="non-positive"):
        load_stimulus_manifest(path)


def stim(w=100, h=100):
    return Stimulus("stim", w, h, 3.0)


def test_preprocess_filters_short_and_drops_first():
    keep = make_scanpath([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], [0.1, 0.2, 0.3, 0.4, 0.5])
    short = make_scanpath([1, 2, 3], [1, 2, 3], [0.1, 0.2, 0.3])
    ds = Dataset({"stim": stim()}, (keep, short))
    out = preprocess(ds)
    assert len(out.scanpaths) == 1
    sp = out.scanpaths[0]
    assert len(sp) == 4
    assert sp.taus() == pytest.approx([0.2, 0.3, 0.4, 0.5])
    assert sp.times() == pytest.approx([0.2, 0.5, 0.9, 1.4])
    assert sp.fixations[0].x == 2


def test_preprocess_is_idempotent():
    sp = make_scanpath([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], [0.1] * 5)
    ds = preprocess(Dataset({"stim": stim()}, (sp,)))
    again = preprocess(ds)
    assert again is ds


def test_preprocess_length_filter_counts_raw_fixations():
    # exactly min_fixations long: kept, then shortened by the drop
    sp = make_scanpath([1, 2, 3, 4], [1, 2, 3, 4], [0.1] * 4)
    out = preprocess(Dataset({"stim": stim()}, (sp,)), min_fixations=4)
    assert len(out.scanpaths) == 1
    assert len(out.scanpaths[0]) == 3


def test_normalize_scanpath_maps_to_unit_square():
    sp = make_scanpath([0, 50, 100], [0, 100, 200], [0.1, 0.2, 0.3])
    norm = normalize_scanpath(sp, stim(100, 200))
    assert norm.positions()[:, 0] == pytest.approx([0, 0.5, 1])
    assert norm.positions()[:, 1] == pytest.approx([0, 0.5, 1])
    assert norm.taus() == pytest.approx(sp.taus())


def test_split_by_stimulus_partitions_and_is_deterministic():
    stimuli = {f"s{i}": Stimulus(f"s{i}", 10, 10, 1.0) for i in range(10)}
    sps = tuple(
        make_scanpath([1, 2], [1, 2], [0.1, 0.2], stimulus_id=f"s{i}", observer_id=f"o{j}")
        for i in range(10) for j in range(3)
    )
    ds = Dataset(stimuli, sps)
    train1, val1 = split_by_stimulus(ds, 0.3, seed=4)
    train2, val2 = split_by_stimulus(ds, 0.3, seed=4)
    assert train1.scanpaths == train2.scanpaths
    assert val1.scanpaths == val2.scanpaths
    assert train1.split == "train" and val1.split == "val"
    # scanpaths are partitioned by stimulus: no id appears on both sides
    train_ids = {sp.stimulus_id for sp in train1.scanpaths}
    val_ids = {sp.stimulus_id for sp in val1.scanpaths}
    assert not train_ids & val_ids
    assert len(val_ids) == 3 and len(train_ids) == 7
    assert len(train1.scanpaths) + len(val1.scanpaths) == len(sps)


def test_feature_volume_round_trip_is_bit_exact(tmp_path, rng):
    data = rng.standard_normal((5, 7, 3)).astype(np.float32)
    vol = FeatureVolume(5, 7, 3, data)
    path = str(tmp_path / "v.fvol")
    write_feature_volume(vol, path)
    back = load_feature_volume(path)
    assert back.height == 5 and back.width == 7 and back.channels == 3
    assert back.data.tobytes() == data.tobytes()
    assert not os.path.exists(path + ".tmp")


def test_feature_volume_binary_layout(tmp_path):
    data = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    path = str(tmp_path / "v.fvol")
    write_feature_volume(FeatureVolume(2, 3, 2, data), path)
    raw = open(path, "rb").read()
    assert raw[:4] == b"FVOL"
    version, h, w, c = struct.unpack("<IIII", raw[4:20])
    assert (version, h, w, c) == (1, 2, 3, 2)
    payload = np.frombuffer(raw[20:], dtype="<f4")
    # row-major, channel fastest: cell (0,0) channels first
    assert payload[:4].tolist() == [0.0, 1.0, 2.0, 3.0]
    assert len(payload) == 12


def test_feature_volume_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "v.fvol")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 32)
    with pytest.raises(DataFormatError, match="magic"):
        load_feature_volume(path)


def test_feature_volume_truncated_payload_rejected(tmp_path):
    data = np.zeros((2, 2, 1), dtype=np.float32)
    path = str(tmp_path / "v.fvol")
    write_feature_volume(FeatureVolume(2, 2, 1, data), path)
    raw = open(path, "rb").read()
    with open(path, "wb") as fh:
        fh.write(raw[:-2])
    with pytest.raises(DataFormatError):
        load_feature_volume(path)


def test_feature_volume_unsupported_version_rejected(tmp_path):
    data = np.zeros((1, 1, 1), dtype=np.float32)
    path = str(tmp_path / "v.fvol")
    write_feature_volume(FeatureVolume(1, 1, 1, data), path)
    raw = bytearray(open(path, "rb").read())
    raw[4] = 99
    with open(path, "wb") as fh:
        fh.write(bytes(raw))
    with pytest.raises(DataFormatError, match="version"):
        load_feature_volume(path)


def test_feature_volume_rejects_non_finite():
    data = np.full((1, 1, 1), np.nan, dtype=np.float32)
    with pytest.raises(ValueError, match="non-finite"):
        FeatureVolume(1, 1, 1, data)


def test_scanpath_accessors():
    sp = make_scanpath([1, 2], [3, 4], [0.5, 0.25])
    assert sp.positions().shape == (2, 2)
    assert sp.positions()[1].tolist() == [2, 4]
    assert sp.taus().tolist() == [0.5, 0.25]
    assert sp.times() == pytest.approx([0.5, 0.75])
    assert len(sp) == 2
