"""Marked temporal point process core.

The model is intensity-free: each fixation event (tau_n, r_n) is scored by an
explicit joint density conditioned on a context vector c = [h | z], where h is
a GRU encoding of the event history and z the stimulus embedding.  Inter-event
times follow a log-Gaussian mixture; positions follow a 2-D Gaussian mixture
with diagonal covariances.  This module holds the straight-line (tape-free)
forward math, parameter layout, and checkpoint serialization.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .datamodel import DataFormatError
from .params import ParamVector, build_manifest

CHECKPOINT_MAGIC = b"TPPG"
CHECKPOINT_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)

_TINY_TAU = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class TppConfig:
    """Architecture sizes: embedding, history, and mixture widths."""

    d_img: int = 256
    d_hist: int = 256
    K: int = 4
    G: int = 16
    d_in: int = 64


@dataclass(frozen=True)
class GruParams:
    embed_w: np.ndarray  # (d_in, 3)
    embed_b: np.ndarray  # (d_in,)
    start_token: np.ndarray  # (d_in,)
    w_update: np.ndarray  # (d_hist, d_in + d_hist)
    b_update: np.ndarray
    w_reset: np.ndarray
    b_reset: np.ndarray
    w_cand: np.ndarray
    b_cand: np.ndarray


@dataclass(frozen=True)
class HeadParams:
    """Linear maps from the context vector to mixture parameters."""

    v_w: np.ndarray  # (K, d_img + d_hist) log-Gaussian mixture weights
    v_s: np.ndarray  # (K, ...) log-space scales
    v_m: np.ndarray  # (K, ...) log-space means
    r_omega: np.ndarray  # (G, ...) position mixture weights
    r_sigma: np.ndarray  # (2G, ...) log-variances, x block then y block
    r_mu: np.ndarray  # (2G, ...) means, x block then y block


@dataclass(frozen=True)
class LgmmParams:
    """Log-Gaussian mixture over inter-event times."""

    w: np.ndarray  # (K,) simplex weights
    m: np.ndarray  # (K,) means of log tau
    s: np.ndarray  # (K,) standard deviations of log tau, positive


@dataclass(frozen=True)
class Gmm2dParams:
    """2-D Gaussian mixture with diagonal covariances."""

    omega: np.ndarray  # (G,) simplex weights
    mu: np.ndarray  # (G, 2)
    var: np.ndarray  # (G, 2) diagonal variances, positive


@dataclass(frozen=True)
class TppModel:
    config: TppConfig
    params: ParamVector


def softmax(a: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    shifted = a - np.max(a, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def make_context(h: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Concatenate history state and stimulus embedding, history first."""
    return np.concatenate([h, z])


def _gru_core(h_prev: np.ndarray, e: np.ndarray, p: GruParams) -> np.ndarray:
    """One GRU update with input embedding e; gate input order is [e, h]."""
    x = np.concatenate([e, h_prev])
    u = _sigmoid(p.w_update @ x + p.b_update)
    r = _sigmoid(p.w_reset @ x + p.b_reset)
    xc = np.concatenate([e, r * h_prev])
    cand = np.tanh(p.w_cand @ xc + p.b_cand)
    return (1.0 - u) * h_prev + u * cand


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def embed_event(event, p: GruParams) -> np.ndarray:
    """Affine embedding of (x_norm, y_norm, tau); tau enters in log space."""
    x, y, tau = float(event[0]), float(event[1]), float(event[2])
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    v = np.array([x, y, math.log(tau)], dtype=np.float64)
    return p.embed_w @ v + p.embed_b


def gru_step(h_prev: np.ndarray, event, p: GruParams) -> np.ndarray:
    """Advance the history state by one event (x_norm, y_norm, tau)."""
    return _gru_core(h_prev, embed_event(event, p), p)


def init_history(p: GruParams) -> np.ndarray:
    """Initial state: a zero state advanced once by the learned start token.

    The start token is consumed directly as the input embedding, bypassing
    the event embedding map.
    """
    d_hist = p.w_update.shape[0]
    return _gru_core(np.zeros(d_hist), p.start_token, p)


def lgmm_params(c: np.ndarray, hp: HeadParams) -> LgmmParams:
    """Inter-event time mixture parameters for a context vector."""
    return LgmmParams(w=softmax(hp.v_w @ c), m=hp.v_m @ c, s=np.exp(hp.v_s @ c))


def lgmm_logpdf(tau, p: LgmmParams):
    """Log-density of the log-Gaussian mixture at tau (scalar or array).

    log p(tau) = LSE_k [ log w_k - log tau - log s_k - log(2 pi)/2
                         - (log tau - m_k)^2 / (2 s_k^2) ]
    """
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr <= 0):
        raise ValueError("tau must be positive")
    log_tau = np.log(tau_arr)[..., None]
    with np.errstate(divide="ignore"):  # zero weights give -inf terms, LSE absorbs them
        log_w = np.log(p.w)
    terms = (
        log_w
        - log_tau
        - np.log(p.s)
        - 0.5 * LOG_2PI
        - (log_tau - p.m) ** 2 / (2.0 * p.s**2)
    )
    out = _logsumexp(terms)
    return out if out.shape else float(out)


def lgmm_sample(p: LgmmParams, rng: np.random.Generator) -> float:
    """Draw one inter-event time: pick a component, exponentiate a Gaussian."""
    k = rng.choice(len(p.w), p=p.w / p.w.sum())
    tau = math.exp(p.m[k] + p.s[k] * rng.standard_normal())
    return max(tau, _TINY_TAU)


def gmm_params(c: np.ndarray, hp: HeadParams) -> Gmm2dParams:
    """Position mixture parameters for a context vector."""
    g = hp.r_omega.shape[0]
    raw_var = np.exp(hp.r_sigma @ c)
    raw_mu = hp.r_mu @ c
    return Gmm2dParams(
        omega=softmax(hp.r_omega @ c),
        mu=np.stack([raw_mu[:g], raw_mu[g:]], axis=1),
        var=np.stack([raw_var[:g], raw_var[g:]], axis=1),
    )


def gmm_logpdf(r, p: Gmm2dParams):
    """Log-density of the diagonal 2-D Gaussian mixture at r ((2,) or (N, 2))."""
    r_arr = np.asarray(r, dtype=np.float64)
    pts = r_arr.reshape(-1, 2)[:, None, :]  # (N, 1, 2)
    with np.errstate(divide="ignore"):
        log_omega = np.log(p.omega)
    quad = ((pts - p.mu) ** 2 / p.var).sum(axis=-1)  # (N, G)
    terms = log_omega - LOG_2PI - 0.5 * np.log(p.var).sum(axis=-1) - 0.5 * quad
    out = _logsumexp(terms)
    return float(out[0]) if r_arr.ndim == 1 else out


def gmm_sample(
    p: Gmm2dParams,
    rng: np.random.Generator,
    bounds: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0)),
    max_tries: int = 16,
) -> np.ndarray:
    """Draw a position, rejection-resampling out-of-bounds draws, then clamping."""
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    omega = p.omega / p.omega.sum()
    r = None
    for _ in range(max_tries):
        g = rng.choice(len(omega), p=omega)
        r = p.mu[g] + np.sqrt(p.var[g]) * rng.standard_normal(2)
        if x_lo <= r[0] <= x_hi and y_lo <= r[1] <= y_hi:
            return r
    return np.array([min(max(r[0], x_lo), x_hi), min(max(r[1], y_lo), y_hi)])


def _logsumexp(terms: np.ndarray) -> np.ndarray:
    m = np.max(terms, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(terms - m).sum(axis=-1, keepdims=True)))[..., 0]


# ---------------------------------------------------------------------------
# Parameter layout


def param_entries(cfg: TppConfig, n_cells: int, c_in: int) -> list[tuple[str, tuple[int, ...]]]:
    """Named shapes of every trainable tensor, in canonical order."""
    d_ctx = cfg.d_img + cfg.d_hist
    gate = (cfg.d_hist, cfg.d_in + cfg.d_hist)
    return [
        ("readout.conv1.w", (8, c_in)),
        ("readout.conv1.b", (8,)),
        ("readout.conv2.w", (16, 8)),
        ("readout.conv2.b", (16,)),
        ("readout.conv3.w", (1, 16)),
        ("readout.conv3.b", (1,)),
        ("readout.proj.w", (cfg.d_img, n_cells)),
        ("readout.proj.b", (cfg.d_img,)),
        ("gru.embed.w", (cfg.d_in, 3)),
        ("gru.embed.b", (cfg.d_in,)),
        ("gru.start_token", (cfg.d_in,)),
        ("gru.update.w", gate),
        ("gru.update.b", (cfg.d_hist,)),
        ("gru.reset.w", gate),
        ("gru.reset.b", (cfg.d_hist,)),
        ("gru.cand.w", gate),
        ("gru.cand.b", (cfg.d_hist,)),
        ("head.v_w", (cfg.K, d_ctx)),
        ("head.v_s", (cfg.K, d_ctx)),
        ("head.v_m", (cfg.K, d_ctx)),
        ("head.r_omega", (cfg.G, d_ctx)),
        ("head.r_sigma", (2 * cfg.G, d_ctx)),
        ("head.r_mu", (2 * cfg.G, d_ctx)),
    ]


def init_params(
    cfg: TppConfig, n_cells: int, c_in: int, rng: np.random.Generator
) -> ParamVector:
    """Fan-in scaled Gaussian weights, zero biases, small random start token."""
    entries = param_entries(cfg, n_cells, c_in)
    manifest = build_manifest(entries)
    flat = np.zeros(sum(int(np.prod(s)) for _, s in entries))
    pv = ParamVector(flat, manifest)
    for name, shape in entries:
        view = pv.view(name)
        if name == "gru.start_token":
            view[...] = 0.1 * rng.standard_normal(shape)
        elif name.endswith(".b"):
            continue
        else:
            fan_in = shape[-1]
            view[...] = rng.standard_normal(shape) / math.sqrt(fan_in)
    return pv


def unpack(cfg: TppConfig, pv: ParamVector):
    """Views of the flat vector as (ReadoutParams, GruParams, HeadParams)."""
    from .readout import ReadoutParams

    v = pv.view
    readout = ReadoutParams(
        w1=v("readout.conv1.w"), b1=v("readout.conv1.b"),
        w2=v("readout.conv2.w"), b2=v("readout.conv2.b"),
        w3=v("readout.conv3.w"), b3=v("readout.conv3.b"),
        proj_w=v("readout.proj.w"), proj_b=v("readout.proj.b"),
    )
    gru = GruParams(
        embed_w=v("gru.embed.w"), embed_b=v("gru.embed.b"),
        start_token=v("gru.start_token"),
        w_update=v("gru.update.w"), b_update=v("gru.update.b"),
        w_reset=v("gru.reset.w"), b_reset=v("gru.reset.b"),
        w_cand=v("gru.cand.w"), b_cand=v("gru.cand.b"),
    )
    heads = HeadParams(
        v_w=v("head.v_w"), v_s=v("head.v_s"), v_m=v("head.v_m"),
        r_omega=v("head.r_omega"), r_sigma=v("head.r_sigma"), r_mu=v("head.r_mu"),
    )
    return readout, gru, heads


def decay_mask(pv: ParamVector) -> np.ndarray:
    """True for entries subject to weight decay (biases and start token exempt)."""
    mask = np.ones(pv.size, dtype=bool)
    for name, offset, shape in pv.manifest:
        if name.endswith(".b") or name == "gru.start_token":
            n = int(np.prod(shape, dtype=int))
            mask[offset : offset + n] = False
    return mask


# ---------------------------------------------------------------------------
# Checkpoint serialization


def save_checkpoint(path: str, model: TppModel) -> None:
    """Binary checkpoint: magic, version, config, manifest, float64 payload."""
    import os

    cfg, pv = model.config, model.params
    parts = [
        struct.pack(
            "<4sIIIIII",
            CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
            cfg.d_img, cfg.d_hist, cfg.K, cfg.G, cfg.d_in,
        ),
        struct.pack("<I", len(pv.manifest)),
    ]
    for name, offset, shape in pv.manifest:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<QB", offset, len(shape)))
        parts.append(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
    parts.append(struct.pack("<Q", pv.size))
    parts.append(np.ascontiguousarray(pv.flat, dtype="<f8").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> TppModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(fmt: str):
        nonlocal pos
        s = struct.Struct(fmt)
        if pos + s.size > len(blob):
            raise DataFormatError(f"{path}: truncated checkpoint")
        vals = s.unpack_from(blob, pos)
        pos += s.size
        return vals

    magic, version, d_img, d_hist, k, g, d_in = take("<4sIIIIII")
    if magic != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    cfg = TppConfig(d_img=d_img, d_hist=d_hist, K=k, G=g, d_in=d_in)
    (n_entries,) = take("<I")
    manifest = []
    for _ in range(n_entries):
        (name_len,) = take("<H")
        if pos + name_len > len(blob):
            raise DataFormatError(f"{path}: truncated checkpoint")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        offset, ndim = take("<QB")
        shape = take(f"<{ndim}I") if ndim else ()
        manifest.append((name, offset, tuple(shape)))
    (total,) = take("<Q")
    expected = total * 8
    if len(blob) - pos != expected:
        raise DataFormatError(
            f"{path}: payload is {len(blob) - pos} bytes, expected {expected}"
        )
    flat = np.frombuffer(blob, dtype="<f8", count=total, offset=pos).copy()
    try:
        pv = ParamVector(flat, tuple(manifest))
    except ValueError as exc:
        raise DataFormatError(f"{path}: inconsistent manifest ({exc})") from exc
    return TppModel(config=cfg, params=pv)
