"""Core data types and file formats for scanpath modelling.

A scanpath is an ordered sequence of fixations on a stimulus.  Each fixation
carries a position in pixels, an arrival time, and the inter-event time tau
since the previous fixation (the first fixation's tau is measured from
stimulus onset).  Fixation duration is identified with tau throughout: the
generative model has no separate duration variable.

Scanpath datasets are read from JSONL or CSV, stimulus metadata from a JSON
manifest, and per-stimulus feature volumes from the FVOL binary format.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional

import numpy as np

FVOL_MAGIC = b"FVOL"
FVOL_VERSION = 1

_HEADER = struct.Struct("<4sIIII")  # magic, version, height, width, channels


class DataFormatError(ValueError):
    """Malformed input data; message carries file and line context."""


@dataclass(frozen=True)
class Fixation:
    """One fixation: position in pixels, arrival time and inter-event time in seconds."""

    x: float
    y: float
    t: float
    tau: float


@dataclass(frozen=True)
class Scanpath:
    stimulus_id: str
    observer_id: str
    fixations: tuple[Fixation, ...]

    def __len__(self) -> int:
        return len(self.fixations)

    def positions(self) -> np.ndarray:
        """(N, 2) array of fixation positions in pixels."""
        return np.array([(f.x, f.y) for f in self.fixations], dtype=float).reshape(-1, 2)

    def taus(self) -> np.ndarray:
        return np.array([f.tau for f in self.fixations], dtype=float)

    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.fixations], dtype=float)


@dataclass(frozen=True)
class Stimulus:
    id: str
    width: int
    height: int
    viewing_duration: float
    feature_path: str = ""

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class Dataset:
    """A set of scanpaths with the stimuli they refer to.

    ``preprocessed`` records whether :func:`preprocess` has been applied, so
    applying it twice never drops fixations twice.
    """

    stimuli: Mapping[str, Stimulus]
    scanpaths: tuple[Scanpath, ...]
    split: str = ""
    preprocessed: bool = False


@dataclass(frozen=True)
class FeatureVolume:
    """Dense per-cell feature grid of shape (height, width, channels), float32."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"feature data shape {self.data.shape} does not match "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("feature volume contains non-finite values")


def _build_fixations(xs, ys, ts, taus, where: str) -> tuple[Fixation, ...]:
    """Validate and assemble fixations; exactly one of ts/taus may be None."""
    if ts is None:
        ts = list(np.cumsum(taus))
    elif taus is None:
        taus = [ts[0]] + [b - a for a, b in zip(ts, ts[1:])]
    fixations = []
    prev_t = 0.0
    for i, (x, y, t, tau) in enumerate(zip(xs, ys, ts, taus)):
        if not (tau > 0) or not math.isfinite(tau):
            raise DataFormatError(f"{where}: fixation {i} has non-positive tau {tau!r}")
        if not (t > prev_t) or not math.isfinite(t):
            raise DataFormatError(
                f"{where}: fixation {i} arrival time {t!r} not after {prev_t!r}"
            )
        fixations.append(Fixation(float(x), float(y), float(t), float(tau)))
        prev_t = t
    return tuple(fixations)


def _unit_scale(unit: str, where: str) -> float:
    if unit == "s":
        return 1.0
    if unit == "ms":
        return 1e-3
    raise DataFormatError(f"{where}: unknown time unit {unit!r}")


def _parse_jsonl(path: str) -> list[Scanpath]:
    scanpaths = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{where}: invalid JSON ({exc.msg})") from exc
            try:
                stimulus_id = str(rec["stimulus_id"])
                observer_id = str(rec["observer_id"])
                fixes = rec["fixations"]
            except (KeyError, TypeError) as exc:
                raise DataFormatError(f"{where}: missing field {exc}") from exc
            scale = _unit_scale(rec.get("unit", "s"), where)
            if not fixes:
                raise DataFormatError(f"{where}: empty fixation list")
            xs = [f["x"] for f in fixes]
            ys = [f["y"] for f in fixes]
            if all("t" in f for f in fixes):
                ts = [f["t"] * scale for f in fixes]
                taus = None
            elif all("tau" in f for f in fixes):
                ts = None
                taus = [f["tau"] * scale for f in fixes]
            else:
                raise DataFormatError(
                    f"{where}: fixations must all carry 't' or all carry 'tau'"
                )
            scanpaths.append(
                Scanpath(stimulus_id, observer_id, _build_fixations(xs, ys, ts, taus, where))
            )
    return scanpaths


def _parse_csv(path: str) -> list[Scanpath]:
    """CSV layout: header stimulus_id,observer_id,unit,x,y and one of t/tau.

    Consecutive rows sharing (stimulus_id, observer_id) form one scanpath.
    """
    scanpaths = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}:1: empty CSV file")
        have_t = "t" in reader.fieldnames
        have_tau = "tau" in reader.fieldnames
        if not (have_t or have_tau):
            raise DataFormatError(f"{path}:1: need a 't' or 'tau' column")
        key = None
        rows: list[tuple] = []
        groups = []
        for lineno, rec in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            try:
                k = (rec["stimulus_id"], rec["observer_id"], rec.get("unit", "s"))
                x, y = float(rec["x"]), float(rec["y"])
                value = float(rec["t"] if have_t else rec["tau"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{where}: bad row ({exc})") from exc
            if k != key:
                if rows:
                    groups.append((key, rows))
                key, rows = k, []
            rows.append((x, y, value, where))
        if rows:
            groups.append((key, rows))
        for (stimulus_id, observer_id, unit), grp in groups:
            where = grp[0][3]
            scale = _unit_scale(unit, where)
            xs = [r[0] for r in grp]
            ys = [r[1] for r in grp]
            vals = [r[2] * scale for r in grp]
            ts, taus = (vals, None) if have_t else (None, vals)
            scanpaths.append(
                Scanpath(stimulus_id, observer_id, _build_fixations(xs, ys, ts, taus, where))
            )
    return scanpaths


def parse_scanpath_dataset(
    path: str,
    fmt: str = "jsonl",
    stimuli: Optional[Mapping[str, Stimulus]] = None,
) -> Dataset:
    """Read scanpaths from ``path`` and return a Dataset.

    Times are converted to seconds according to each record's unit.  When a
    stimulus map is supplied, every scanpath's stimulus_id must resolve.
    """
    if fmt == "jsonl":
        scanpaths = _parse_jsonl(path)
    elif fmt == "csv":
        scanpaths = _parse_csv(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if stimuli is not None:
        for sp in scanpaths:
            if sp.stimulus_id not in stimuli:
                raise DataFormatError(
                    f"{path}: scanpath references unknown stimulus {sp.stimulus_id!r}"
                )
    return Dataset(stimuli=dict(stimuli or {}), scanpaths=tuple(scanpaths))


def serialize_scanpaths(scanpaths: Iterable[Scanpath], path: str) -> None:
    """Write scanpaths as JSONL with times in seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        for sp in scanpaths:
            rec = {
                "stimulus_id": sp.stimulus_id,
                "observer_id": sp.observer_id,
                "unit": "s",
                "fixations": [
                    {"x": f.x, "y": f.y, "t": f.t, "tau": f.tau} for f in sp.fixations
                ],
            }
            fh.write(json.dumps(rec) + "\n")


def load_stimulus_manifest(path: str) -> dict[str, Stimulus]:
    """Read a JSON stimulus manifest: a list of stimulus records."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(records, list):
        raise DataFormatError(f"{path}: manifest must be a list of stimulus records")
    stimuli: dict[str, Stimulus] = {}
    for i, rec in enumerate(records):
        try:
            stim = Stimulus(
                id=str(rec["id"]),
                width=int(rec["width"]),
                height=int(rec["height"]),
                viewing_duration=float(rec["viewing_duration"]),
                feature_path=str(rec.get("feature_path", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: record {i}: {exc}") from exc
        if stim.width <= 0 or stim.height <= 0 or stim.viewing_duration < 0:
            raise DataFormatError(f"{path}: record {i}: non-positive dimensions")
        if stim.id in stimuli:
            raise DataFormatError(f"{path}: duplicate stimulus id {stim.id!r}")
        stimuli[stim.id] = stim
    return stimuli


def preprocess(
    dataset: Dataset, min_fixations: int = 4, drop_first: bool = True
) -> Dataset:
    """Filter short scanpaths and drop each scanpath's first fixation.

    Scanpaths with fewer than ``min_fixations`` fixations are removed, then
    the initial (onset-anchored) fixation is discarded and arrival times are
    rebuilt from the remaining inter-event times; the first retained fixation
    keeps its original tau.  Idempotent: a preprocessed dataset is returned
    unchanged.
    """
    if dataset.preprocessed:
        return dataset
    kept = []
    for sp in dataset.scanpaths:
        if len(sp) < min_fixations:
            continue
        fixes = sp.fixations[1:] if drop_first else sp.fixations
        t = 0.0
        rebuilt = []
        for f in fixes:
            t += f.tau
            rebuilt.append(Fixation(f.x, f.y, t, f.tau))
        kept.append(replace(sp, fixations=tuple(rebuilt)))
    return replace(dataset, scanpaths=tuple(kept), preprocessed=True)


def normalize_scanpath(sp: Scanpath, stim: Stimulus) -> Scanpath:
    """Rescale fixation positions to the unit square [0, 1]^2."""
    fixes = tuple(
        Fixation(f.x / stim.width, f.y / stim.height, f.t, f.tau) for f in sp.fixations
    )
    return replace(sp, fixations=fixes)


def split_by_stimulus(
    dataset: Dataset, val_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministically split a dataset into train/val parts by stimulus id."""
    ids = sorted(dataset.stimuli)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B17]))
    perm = [ids[i] for i in rng.permutation(len(ids))]
    n_val = max(1, int(round(val_fraction * len(ids)))) if len(ids) > 1 else 0
    val_ids = set(perm[:n_val])
    train_sps = tuple(sp for sp in dataset.scanpaths if sp.stimulus_id not in val_ids)
    val_sps = tuple(sp for sp in dataset.scanpaths if sp.stimulus_id in val_ids)
    train = replace(dataset, scanpaths=train_sps, split="train")
    val = replace(dataset, scanpaths=val_sps, split="val")
    return train, val


def load_feature_volume(path: str) -> FeatureVolume:
    """Read an FVOL file: header then float32 cells, row-major, channel-fastest."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataFormatError(f"{path}: truncated header")
        magic, version, height, width, channels = _HEADER.unpack(head)
        if magic != FVOL_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        if version != FVOL_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = height * width * channels * 4
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
    if not np.isfinite(data).all():
        raise DataFormatError(f"{path}: non-finite feature values")
    return FeatureVolume(height, width, channels, data.copy())


def write_feature_volume(volume: FeatureVolume, path: str) -> None:
    """Write an FVOL file; the payload round-trips bit-exactly."""
    data = np.ascontiguousarray(volume.data, dtype="<f4")
    header = _HEADER.pack(
        FVOL_MAGIC, FVOL_VERSION, volume.height, volume.width, volume.channels
    )
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
    os.replace(tmp, path)
