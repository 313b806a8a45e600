"""Synthetic scanpath corpus generator.

Builds a small, fully deterministic dataset for demos and end-to-end tests:
each stimulus gets a handful of attractor points, a feature volume whose
first channel peaks at those attractors, and observers whose fixations hop
between attractors with Gaussian jitter and lognormal inter-event times.
"""

from __future__ import annotations

import argparse
import json
import os
from typing import Optional

import numpy as np

from .datamodel import (
    Dataset,
    FeatureVolume,
    Fixation,
    Scanpath,
    Stimulus,
    serialize_scanpaths,
    write_feature_volume,
)

GRID_HEIGHT = 12
GRID_WIDTH = 16


def _attractors(rng: np.random.Generator, width: int, height: int, n: int) -> np.ndarray:
    lo = np.array([0.15 * width, 0.15 * height])
    hi = np.array([0.85 * width, 0.85 * height])
    return rng.uniform(lo, hi, size=(n, 2))


def _feature_volume(
    rng: np.random.Generator, stim: Stimulus, attractors: np.ndarray, channels: int
) -> FeatureVolume:
    """Feature grid whose channel 0 is a bump map over the attractors.

    Remaining channels hold a horizontal ramp and smooth random fields, so
    the volume is informative but not degenerate.
    """
    ys = (np.arange(GRID_HEIGHT) + 0.5) / GRID_HEIGHT * stim.height
    xs = (np.arange(GRID_WIDTH) + 0.5) / GRID_WIDTH * stim.width
    gx, gy = np.meshgrid(xs, ys)
    bumps = np.zeros((GRID_HEIGHT, GRID_WIDTH))
    sigma = 0.12 * min(stim.width, stim.height)
    for ax, ay in attractors:
        bumps += np.exp(-((gx - ax) ** 2 + (gy - ay) ** 2) / (2.0 * sigma**2))
    planes = [bumps / bumps.max()]
    if channels >= 2:
        planes.append(np.tile(np.linspace(0.0, 1.0, GRID_WIDTH), (GRID_HEIGHT, 1)))
    while len(planes) < channels:
        coarse = rng.normal(size=(3, 4))
        row = np.clip(np.linspace(0, 2.999, GRID_HEIGHT).astype(int), 0, 2)
        col = np.clip(np.linspace(0, 3.999, GRID_WIDTH).astype(int), 0, 3)
        planes.append(coarse[np.ix_(row, col)])
    data = np.stack(planes, axis=-1).astype(np.float32)
    return FeatureVolume(GRID_HEIGHT, GRID_WIDTH, channels, data)


def _scanpath(
    rng: np.random.Generator,
    stim: Stimulus,
    attractors: np.ndarray,
    observer_id: str,
    jitter: float,
    max_fixations: int = 20,
) -> Scanpath:
    """One observer's fixation sequence over a stimulus.

    Mostly hops to a different attractor, sometimes stays near the current
    one (producing return fixations); the final event may overshoot the
    viewing duration, matching how recordings are truncated.
    """
    current = int(rng.integers(len(attractors)))
    fixations = []
    t = 0.0
    while t < stim.viewing_duration and len(fixations) < max_fixations:
        tau = float(rng.lognormal(mean=np.log(0.25), sigma=0.35))
        t += tau
        center = attractors[current]
        pos = rng.normal(loc=center, scale=jitter)
        x = float(np.clip(pos[0], 1.0, stim.width - 1.0))
        y = float(np.clip(pos[1], 1.0, stim.height - 1.0))
        fixations.append(Fixation(x, y, t, tau))
        if rng.random() < 0.7 and len(attractors) > 1:
            others = [i for i in range(len(attractors)) if i != current]
            current = others[int(rng.integers(len(others)))]
    return Scanpath(stim.id, observer_id, tuple(fixations))


def make_toy_dataset(
    out_dir: Optional[str] = None,
    n_stimuli: int = 8,
    n_observers: int = 10,
    seed: int = 0,
    width: int = 640,
    height: int = 480,
    viewing_duration: float = 3.0,
    channels: int = 3,
    jitter: float = 30.0,
    n_attractors: int = 3,
) -> tuple[Dataset, dict[str, FeatureVolume]]:
    """Generate the corpus, optionally writing it to ``out_dir``.

    Writes manifest.json, scanpaths.jsonl and features/<id>.fvol when a
    directory is given; always returns the in-memory dataset and volumes.
    Identical arguments produce identical files.
    """
    if n_stimuli < 1 or n_observers < 1:
        raise ValueError("need at least one stimulus and one observer")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70D0]))
    stimuli: dict[str, Stimulus] = {}
    volumes: dict[str, FeatureVolume] = {}
    scanpaths: list[Scanpath] = []
    for s in range(n_stimuli):
        stim_id = f"stim{s:03d}"
        stim = Stimulus(
            id=stim_id,
            width=width,
            height=height,
            viewing_duration=viewing_duration,
            feature_path=os.path.join("features", f"{stim_id}.fvol"),
        )
        stimuli[stim_id] = stim
        attractors = _attractors(rng, width, height, n_attractors)
        volumes[stim_id] = _feature_volume(rng, stim, attractors, channels)
        for o in range(n_observers):
            scanpaths.append(_scanpath(rng, stim, attractors, f"obs{o:02d}", jitter))
    dataset = Dataset(stimuli=stimuli, scanpaths=tuple(scanpaths))
    if out_dir is not None:
        feat_dir = os.path.join(out_dir, "features")
        os.makedirs(feat_dir, exist_ok=True)
        manifest = [
            {
                "id": st.id,
                "width": st.width,
                "height": st.height,
                "viewing_duration": st.viewing_duration,
                "feature_path": st.feature_path,
            }
            for st in stimuli.values()
        ]
        tmp = os.path.join(out_dir, "manifest.json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, os.path.join(out_dir, "manifest.json"))
        for stim_id, vol in volumes.items():
            write_feature_volume(vol, os.path.join(feat_dir, f"{stim_id}.fvol"))
        serialize_scanpaths(scanpaths, os.path.join(out_dir, "scanpaths.jsonl"))
    return dataset, volumes


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic scanpath corpus.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--stimuli", type=int, default=8)
    parser.add_argument("--observers", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    dataset, _ = make_toy_dataset(
        out_dir=args.out,
        n_stimuli=args.stimuli,
        n_observers=args.observers,
        seed=args.seed,
    )
    print(f"wrote {len(dataset.scanpaths)} scanpaths over {len(dataset.stimuli)} stimuli to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
