"""Training loop: AdamW with decoupled weight decay, early stopping on
validation NLL, gradient clipping, and seed-reproducible batching.

Batches are split into fixed-size chunks for evaluation; chunk boundaries
depend only on the data order, never on the thread count, and chunk results
are reduced in order, so training is bit-reproducible for a given seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .autodiff import NonFiniteError, backward, forward_nll
from .concurrency import run_ordered
from .datamodel import Dataset, FeatureVolume, Scanpath, normalize_scanpath
from .params import ParamVector
from .readout import coordconv_augment
from .tppcore import TppModel, decay_mask

log = logging.getLogger(__name__)

CHUNK_SIZE = 32

Example = tuple[Scanpath, FeatureVolume]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.1
    batch_size: int = 128
    patience: int = 20
    max_epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 10.0


@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    step: int

    @staticmethod
    def zeros(n: int) -> "OptimState":
        return OptimState(m=np.zeros(n), v=np.zeros(n), step=0)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_nll: float
    val_nll: float


def adamw_step(
    params: ParamVector, grads: ParamVector, state: OptimState, cfg: TrainConfig
) -> tuple[ParamVector, OptimState]:
    """One decoupled-weight-decay Adam update; biases and the start token
    are exempt from decay."""
    t = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads.flat
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.flat**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    decay = cfg.weight_decay * params.flat * decay_mask(params)
    new_flat = params.flat - cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + decay)
    return params.with_flat(new_flat), OptimState(m=m, v=v, step=t)


def clip_global_norm(grads: ParamVector, max_norm: float) -> ParamVector:
    norm = float(np.linalg.norm(grads.flat))
    if norm > max_norm:
        return grads.with_flat(grads.flat * (max_norm / norm))
    return grads


def prepare_examples(
    dataset: Dataset, volumes: Mapping[str, FeatureVolume]
) -> list[Example]:
    """Pair each scanpath with its stimulus's coordinate-augmented volume and
    normalize positions to the unit square.  Volumes are augmented once per
    stimulus and shared between that stimulus's scanpaths."""
    augmented: dict[str, FeatureVolume] = {}
    examples = []
    for sp in dataset.scanpaths:
        stim = dataset.stimuli[sp.stimulus_id]
        if sp.stimulus_id not in augmented:
            if sp.stimulus_id not in volumes:
                raise KeyError(f"no feature volume for stimulus {sp.stimulus_id!r}")
            augmented[sp.stimulus_id] = coordconv_augment(volumes[sp.stimulus_id])
        examples.append((normalize_scanpath(sp, stim), augmented[sp.stimulus_id]))
    return examples


def _chunks(items: Sequence, size: int) -> list[Sequence]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def _n_events(examples: Sequence[Example]) -> int:
    return sum(len(sp) for sp, _ in examples)


def batch_nll(model: TppModel, examples: Sequence[Example], threads: int = 1) -> float:
    """Mean per-event NLL over a set of examples (no gradient)."""
    chunks = _chunks(examples, CHUNK_SIZE)
    losses = run_ordered(lambda ch: forward_nll(model, list(ch))[0], chunks, threads)
    weights = [_n_events(ch) for ch in chunks]
    return float(sum(l * w for l, w in zip(losses, weights)) / sum(weights))


def batch_nll_and_grad(
    model: TppModel, examples: Sequence[Example], threads: int = 1
) -> tuple[float, ParamVector]:
    chunks = _chunks(examples, CHUNK_SIZE)

    def one(ch):
        loss, tape = forward_nll(model, list(ch))
        return loss, backward(tape)

    results = run_ordered(one, chunks, threads)
    total = sum(_n_events(ch) for ch in chunks)
    loss_sum = 0.0
    grad_flat = np.zeros(model.params.size)
    for ch, (loss, grad) in zip(chunks, results):
        w = _n_events(ch) / total
        loss_sum += loss * w
        grad_flat += grad.flat * w
    return loss_sum, model.params.with_flat(grad_flat)


def train(
    model: TppModel,
    train_examples: Sequence[Example],
    val_examples: Optional[Sequence[Example]],
    cfg: TrainConfig,
    threads: int = 1,
) -> tuple[TppModel, list[EpochStats]]:
    """Fit the model, returning the best checkpoint and per-epoch history.

    Early stopping watches validation NLL (training NLL when no validation
    set is given); training aborts on a non-finite loss and returns the last
    finite best parameters.
    """
    if not train_examples:
        raise ValueError("empty training set")
    params = model.params.copy()
    state = OptimState.zeros(params.size)
    best = params.copy()
    best_score = np.inf
    bad_epochs = 0
    history: list[EpochStats] = []
    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        order = rng.permutation(len(train_examples))
        epoch_loss, epoch_events = 0.0, 0
        diverged = False
        for batch_idx in _chunks(order, cfg.batch_size):
            batch = [train_examples[i] for i in batch_idx]
            current = TppModel(model.config, params)
            try:
                loss, grads = batch_nll_and_grad(current, batch, threads)
            except NonFiniteError as exc:
                log.warning("aborting at epoch %d: %s", epoch, exc)
                diverged = True
                break
            if not np.isfinite(loss):
                log.warning("aborting at epoch %d: non-finite loss", epoch)
                diverged = True
                break
            grads = clip_global_norm(grads, cfg.grad_clip)
            params, state = adamw_step(params, grads, state, cfg)
            n = _n_events(batch)
            epoch_loss += loss * n
            epoch_events += n
        if diverged:
            break
        train_nll = epoch_loss / epoch_events
        current = TppModel(model.config, params)
        if val_examples:
            try:
                val_nll = batch_nll(current, val_examples, threads)
            except NonFiniteError as exc:
                log.warning("aborting at epoch %d: %s", epoch, exc)
                break
        else:
            val_nll = train_nll
        history.append(EpochStats(epoch, train_nll, val_nll))
        score = val_nll
        if np.isfinite(score) and score < best_score:
            best_score = score
            best = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        log.info(
            "epoch %d: train %.5f val %.5f best %.5f", epoch, train_nll, val_nll, best_score
        )
        if bad_epochs >= cfg.patience:
            break
    return TppModel(model.config, best), history


def write_history_csv(history: Sequence[EpochStats], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_nll,val_nll\n")
        for row in history:
            fh.write(f"{row.epoch},{row.train_nll!r},{row.val_nll!r}\n")
