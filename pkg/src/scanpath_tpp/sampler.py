"""Autoregressive scanpath generation from a trained model.

Each scanpath draws inter-event times and positions from the mixture heads,
feeding every generated event back into the history encoder.  Generation
stops once the cumulative time reaches the stimulus viewing duration or a
fixation cap is hit; the final event that crosses the horizon is kept.
"""

from __future__ import annotations

import zlib
from typing import Mapping

import numpy as np

from .datamodel import Dataset, FeatureVolume, Fixation, Scanpath, Stimulus
from .readout import coordconv_augment, readout_forward
from .tppcore import (
    TppModel,
    gmm_params,
    gmm_sample,
    gru_step,
    init_history,
    lgmm_params,
    lgmm_sample,
    make_context,
    unpack,
)

MAX_FIXATIONS = 50

_MIN_TAU = 1e-12  # keeps arrival times strictly increasing at plausible horizons


def sample_scanpath(
    model: TppModel,
    z: np.ndarray,
    stim: Stimulus,
    rng: np.random.Generator,
    observer_id: str = "sim:0",
    max_fixations: int = MAX_FIXATIONS,
) -> Scanpath:
    """Generate one scanpath on a stimulus given its readout embedding z."""
    _, gru, heads = unpack(model.config, model.params)
    h = init_history(gru)
    t = 0.0
    fixations: list[Fixation] = []
    while t < stim.viewing_duration and len(fixations) < max_fixations:
        c = make_context(h, z)
        if not np.isfinite(c).all():
            raise ArithmeticError("model produced a non-finite context vector")
        tau = max(lgmm_sample(lgmm_params(c, heads), rng), _MIN_TAU)
        r = gmm_sample(gmm_params(c, heads), rng)
        if not (np.isfinite(tau) and np.isfinite(r).all()):
            raise ArithmeticError("model produced a non-finite sample")
        t += tau
        fixations.append(
            Fixation(float(r[0] * stim.width), float(r[1] * stim.height), t, tau)
        )
        h = gru_step(h, (float(r[0]), float(r[1]), tau), gru)
    return Scanpath(stim.id, observer_id, tuple(fixations))


def derive_rng(seed: int, stimulus_id: str, replicate: int) -> np.random.Generator:
    """Per-scanpath generator; independent of iteration order."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(stimulus_id.encode("utf-8")), replicate])
    )


def sample_ensemble(
    model: TppModel,
    dataset: Dataset,
    volumes: Mapping[str, FeatureVolume],
    n_per_stimulus: int,
    seed: int,
    max_fixations: int = MAX_FIXATIONS,
) -> list[Scanpath]:
    """Generate n scanpaths per stimulus with derived per-scanpath seeds.

    Simulated observers are named "sim:<replicate>".  Removing a stimulus
    from the dataset leaves every other stimulus's samples unchanged.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    readout, _, _ = unpack(model.config, model.params)
    out: list[Scanpath] = []
    for stim_id in sorted(dataset.stimuli):
        stim = dataset.stimuli[stim_id]
        if stim_id not in volumes:
            raise KeyError(f"no feature volume for stimulus {stim_id!r}")
        z = readout_forward(coordconv_augment(volumes[stim_id]), readout)
        for rep in range(n_per_stimulus):
            rng = derive_rng(seed, stim_id, rep)
            out.append(
                sample_scanpath(
                    model, z, stim, rng, observer_id=f"sim:{rep}",
                    max_fixations=max_fixations,
                )
            )
    return out
