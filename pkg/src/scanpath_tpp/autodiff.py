"""Reverse-mode automatic differentiation for the scanpath model.

A Tape records primitive operations (an append-only Wengert list); each node
caches its value and a vector-Jacobian callback.  ``forward_nll`` assembles
the full differentiable computation (readout -> GRU unroll -> mixture heads ->
log-densities -> mean negative log-likelihood) for a batch of scanpaths, and
``backward`` walks the tape once in reverse to produce the gradient as a flat
parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .datamodel import FeatureVolume, Scanpath
from .params import ParamVector
from .tppcore import LOG_2PI, TppModel


class NonFiniteError(FloatingPointError):
    """An intermediate tape value became NaN or infinite."""


@dataclass
class Node:
    op: str
    value: np.ndarray
    parents: tuple[int, ...]
    vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]
    needs_grad: bool


class Tape:
    """Append-only record of primitive operations, replayed in reverse."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite
        self.consumed = False
        self.root: Optional[int] = None
        self.param_nodes: list[tuple[str, int]] = []
        self.manifest = None

    def push(self, op, value, parents=(), vjp=None, needs_grad=None) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteError(f"non-finite value at node {len(self.nodes)} ({op})")
        if needs_grad is None:
            needs_grad = any(self.nodes[p].needs_grad for p in parents)
        self.nodes.append(Node(op, value, tuple(parents), vjp, needs_grad))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value, needs_grad: bool = False, op: str = "leaf") -> "Var":
        return self.push(op, value, (), None, needs_grad)

    def param(self, name: str, value) -> "Var":
        var = self.leaf(value, needs_grad=True, op=f"param:{name}")
        self.param_nodes.append((name, var.idx))
        return var


@dataclass(frozen=True)
class Var:
    tape: Tape
    idx: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value


def _unbroadcast(adj: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce an adjoint back to the shape of a broadcast operand."""
    while adj.ndim > len(shape):
        adj = adj.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and adj.shape[axis] != 1:
            adj = adj.sum(axis=axis, keepdims=True)
    return adj


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


# -- elementwise and broadcast arithmetic -----------------------------------

def add(x: Var, y: Var) -> Var:
    tape = _same_tape(x, y)
    xs, ys = x.value.shape, y.value.shape
    return tape.push(
        "add", x.value + y.value, (x.idx, y.idx),
        lambda a: (_unbroadcast(a, xs), _unbroadcast(a, ys)),
    )


def sub(x: Var, y: Var) -> Var:
    tape = _same_tape(x, y)
    xs, ys = x.value.shape, y.value.shape
    return tape.push(
        "sub", x.value - y.value, (x.idx, y.idx),
        lambda a: (_unbroadcast(a, xs), _unbroadcast(-a, ys)),
    )


def mul(x: Var, y: Var) -> Var:
    tape = _same_tape(x, y)
    xv, yv = x.value, y.value
    return tape.push(
        "mul", xv * yv, (x.idx, y.idx),
        lambda a: (_unbroadcast(a * yv, xv.shape), _unbroadcast(a * xv, yv.shape)),
    )


def div(x: Var, y: Var) -> Var:
    tape = _same_tape(x, y)
    xv, yv = x.value, y.value
    return tape.push(
        "div", xv / yv, (x.idx, y.idx),
        lambda a: (
            _unbroadcast(a / yv, xv.shape),
            _unbroadcast(-a * xv / (yv * yv), yv.shape),
        ),
    )


def addc(x: Var, c: float) -> Var:
    return x.tape.push("addc", x.value + c, (x.idx,), lambda a: (a,))


def scale(x: Var, c: float) -> Var:
    return x.tape.push("scale", x.value * c, (x.idx,), lambda a: (a * c,))


def one_minus(x: Var) -> Var:
    return x.tape.push("one_minus", 1.0 - x.value, (x.idx,), lambda a: (-a,))


def square(x: Var) -> Var:
    xv = x.value
    return x.tape.push("square", xv * xv, (x.idx,), lambda a: (2.0 * a * xv,))


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return x.tape.push("exp", out, (x.idx,), lambda a: (a * out,))


def log(x: Var) -> Var:
    xv = x.value
    return x.tape.push("log", np.log(xv), (x.idx,), lambda a: (a / xv,))


def tanh(x: Var) -> Var:
    out = np.tanh(x.value)
    return x.tape.push("tanh", out, (x.idx,), lambda a: (a * (1.0 - out * out),))


def sigmoid(x: Var) -> Var:
    xv = x.value
    out = np.empty_like(xv)
    pos = xv >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
    ex = np.exp(xv[~pos])
    out[~pos] = ex / (1.0 + ex)
    return x.tape.push("sigmoid", out, (x.idx,), lambda a: (a * out * (1.0 - out),))


def softplus(x: Var) -> Var:
    xv = x.value
    sig = 1.0 / (1.0 + np.exp(-np.abs(xv)))
    sig = np.where(xv >= 0, sig, 1.0 - sig)
    return x.tape.push(
        "softplus", np.logaddexp(0.0, xv), (x.idx,), lambda a: (a * sig,)
    )


# -- linear algebra and structure -------------------------------------------

def linear(x: Var, w: Var, b: Optional[Var] = None) -> Var:
    """x @ w.T (+ b): x is (B, D), w is (K, D), b is (K,)."""
    tape = _same_tape(x, w) if b is None else _same_tape(x, w, b)
    xv, wv = x.value, w.value
    out = xv @ wv.T
    if b is not None:
        out = out + b.value

    def vjp(a):
        grads = [a @ wv, a.T @ xv]
        if b is not None:
            grads.append(a.sum(axis=0))
        return grads

    parents = (x.idx, w.idx) if b is None else (x.idx, w.idx, b.idx)
    return tape.push("linear", out, parents, vjp)


def hstack(xs: Sequence[Var]) -> Var:
    tape = _same_tape(*xs)
    widths = [v.value.shape[1] for v in xs]
    splits = np.cumsum(widths)[:-1]
    out = np.concatenate([v.value for v in xs], axis=1)
    return tape.push(
        "hstack", out, tuple(v.idx for v in xs),
        lambda a: tuple(np.split(a, splits, axis=1)),
    )


def vstack(xs: Sequence[Var]) -> Var:
    tape = _same_tape(*xs)
    heights = [v.value.shape[0] for v in xs]
    splits = np.cumsum(heights)[:-1]
    out = np.concatenate([v.value for v in xs], axis=0)
    return tape.push(
        "vstack", out, tuple(v.idx for v in xs),
        lambda a: tuple(np.split(a, splits, axis=0)),
    )


def gather_rows(z: Var, idx: np.ndarray) -> Var:
    """Select rows of z by integer index, with scatter-add on the way back."""
    zv = z.value
    idx = np.asarray(idx, dtype=int)

    def vjp(a):
        out = np.zeros_like(zv)
        np.add.at(out, idx, a)
        return (out,)

    return z.tape.push("gather_rows", zv[idx], (z.idx,), vjp)


def cols(x: Var, j0: int, j1: int) -> Var:
    xv = x.value

    def vjp(a):
        out = np.zeros_like(xv)
        out[:, j0:j1] = a
        return (out,)

    return x.tape.push("cols", xv[:, j0:j1], (x.idx,), vjp)


def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    old = x.value.shape
    return x.tape.push(
        "reshape", x.value.reshape(shape), (x.idx,), lambda a: (a.reshape(old),)
    )


def tile_row(v: Var, n: int) -> Var:
    """Broadcast a (d,) vector to n identical rows."""
    out = np.broadcast_to(v.value, (n, v.value.shape[0])).copy()
    return v.tape.push("tile_row", out, (v.idx,), lambda a: (a.sum(axis=0),))


def logsumexp(x: Var) -> Var:
    """Stable log-sum-exp along the last axis, keepdims; safe for huge spreads."""
    xv = x.value
    m = np.max(xv, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = m + np.log(np.exp(xv - m).sum(axis=-1, keepdims=True))
    soft = np.exp(xv - out)
    return x.tape.push("logsumexp", out, (x.idx,), lambda a: (a * soft,))


def sum_all(x: Var) -> Var:
    shape = x.value.shape
    return x.tape.push(
        "sum_all", x.value.sum(), (x.idx,), lambda a: (np.full(shape, a),)
    )


# ---------------------------------------------------------------------------
# Differentiable negative log-likelihood


def _gru_core_tape(h: Var, e: Var, p: dict) -> Var:
    x = hstack([e, h])
    u = sigmoid(linear(x, p["gru.update.w"], p["gru.update.b"]))
    r = sigmoid(linear(x, p["gru.reset.w"], p["gru.reset.b"]))
    xc = hstack([e, mul(r, h)])
    cand = tanh(linear(xc, p["gru.cand.w"], p["gru.cand.b"]))
    return add(mul(one_minus(u), h), mul(u, cand))


def forward_nll(
    model: TppModel,
    batch: list[tuple[Scanpath, FeatureVolume]],
    check_finite: bool = True,
) -> tuple[float, Tape]:
    """Mean per-event negative log-likelihood of a batch, recorded on a tape.

    Scanpath positions must already be normalized to the unit square and
    feature volumes coordinate-augmented.  Scanpaths sharing a volume object
    share one readout computation.

    Overflow to inf is handled by the tape's finiteness check (or propagated
    when ``check_finite`` is off), so numpy's own warnings are suppressed.
    """
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _forward_nll(model, batch, check_finite)


def _forward_nll(
    model: TppModel,
    batch: list[tuple[Scanpath, FeatureVolume]],
    check_finite: bool,
) -> tuple[float, Tape]:
    if not batch:
        raise ValueError("empty batch")
    cfg, pv = model.config, model.params
    tape = Tape(check_finite=check_finite)
    tape.manifest = pv.manifest
    p = {name: tape.param(name, pv.view(name)) for name in pv.names()}

    c_in = pv.view("readout.conv1.w").shape[1]
    n_cells = pv.view("readout.proj.w").shape[1]

    # one readout per distinct volume object
    vol_order: list[FeatureVolume] = []
    vol_slot: dict[int, int] = {}
    vol_idx = np.empty(len(batch), dtype=int)
    for i, (sp, vol) in enumerate(batch):
        if len(sp) == 0:
            raise ValueError("scanpath with no fixations")
        if vol.channels != c_in:
            raise ValueError(f"volume has {vol.channels} channels, model expects {c_in}")
        if vol.height * vol.width != n_cells:
            raise ValueError(
                f"volume has {vol.height * vol.width} cells, model expects {n_cells}"
            )
        if id(vol) not in vol_slot:
            vol_slot[id(vol)] = len(vol_order)
            vol_order.append(vol)
        vol_idx[i] = vol_slot[id(vol)]

    zs = []
    for vol in vol_order:
        cells = tape.leaf(vol.data.reshape(-1, vol.channels).astype(np.float64))
        h1 = softplus(linear(cells, p["readout.conv1.w"], p["readout.conv1.b"]))
        h2 = softplus(linear(h1, p["readout.conv2.w"], p["readout.conv2.b"]))
        gaze_map = linear(h2, p["readout.conv3.w"], p["readout.conv3.b"])
        flat = reshape(gaze_map, (1, n_cells))
        zs.append(linear(flat, p["readout.proj.w"], p["readout.proj.b"]))
    z_batch = gather_rows(vstack(zs), vol_idx)  # (B, d_img)

    # padded event tensors
    n = len(batch)
    length = max(len(sp) for sp, _ in batch)
    xs = np.full((n, length), 0.5)
    ys = np.full((n, length), 0.5)
    taus = np.ones((n, length))
    mask = np.zeros((n, length))
    for i, (sp, _) in enumerate(batch):
        pos = sp.positions()
        if pos.min() < 0.0 or pos.max() > 1.0:
            raise ValueError(
                f"scanpath {sp.stimulus_id!r}/{sp.observer_id!r} has positions outside "
                "the unit square; normalize before scoring"
            )
        xs[i, : len(sp)] = pos[:, 0]
        ys[i, : len(sp)] = pos[:, 1]
        taus[i, : len(sp)] = sp.taus()
        mask[i, : len(sp)] = 1.0
    log_taus = np.log(taus)
    total_events = mask.sum()

    g = cfg.G
    h = tape.leaf(np.zeros((n, cfg.d_hist)))
    h = _gru_core_tape(h, tile_row(p["gru.start_token"], n), p)

    step_lls = []
    for t in range(length):
        c = hstack([h, z_batch])

        # inter-event time density
        aw = linear(c, p["head.v_w"])
        a_s = linear(c, p["head.v_s"])
        am = linear(c, p["head.v_m"])
        log_w = sub(aw, logsumexp(aw))
        lt = tape.leaf(log_taus[:, t : t + 1])
        quad = div(square(sub(lt, am)), scale(exp(scale(a_s, 2.0)), 2.0))
        terms_tau = addc(sub(sub(sub(log_w, a_s), quad), lt), -0.5 * LOG_2PI)
        lp_tau = logsumexp(terms_tau)

        # position density
        a_om = linear(c, p["head.r_omega"])
        a_sig = linear(c, p["head.r_sigma"])
        a_mu = linear(c, p["head.r_mu"])
        log_om = sub(a_om, logsumexp(a_om))
        logv_x, logv_y = cols(a_sig, 0, g), cols(a_sig, g, 2 * g)
        mu_x, mu_y = cols(a_mu, 0, g), cols(a_mu, g, 2 * g)
        rx = tape.leaf(xs[:, t : t + 1])
        ry = tape.leaf(ys[:, t : t + 1])
        qx = div(square(sub(rx, mu_x)), scale(exp(logv_x), 2.0))
        qy = div(square(sub(ry, mu_y)), scale(exp(logv_y), 2.0))
        halves = scale(add(logv_x, logv_y), 0.5)
        terms_r = addc(sub(sub(sub(log_om, halves), qx), qy), -LOG_2PI)
        lp_r = logsumexp(terms_r)

        step_ll = mul(add(lp_tau, lp_r), tape.leaf(mask[:, t : t + 1]))
        step_lls.append(step_ll)

        if t + 1 < length:
            ev = tape.leaf(np.stack([xs[:, t], ys[:, t], log_taus[:, t]], axis=1))
            h = _gru_core_tape(h, linear(ev, p["gru.embed.w"], p["gru.embed.b"]), p)

    total_ll = sum_all(hstack(step_lls))
    loss = scale(total_ll, -1.0 / total_events)
    tape.root = loss.idx
    return float(loss.value), tape


def backward(tape: Tape) -> ParamVector:
    """Accumulate adjoints from the loss back to every parameter leaf."""
    if tape.consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    if tape.root is None:
        raise RuntimeError("tape has no recorded loss node")
    tape.consumed = True
    adjoints: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    adjoints[tape.root] = np.ones_like(tape.nodes[tape.root].value)
    for idx in range(tape.root, -1, -1):
        adj = adjoints[idx]
        node = tape.nodes[idx]
        if adj is None or node.vjp is None or not node.needs_grad:
            continue
        for pidx, padj in zip(node.parents, node.vjp(adj)):
            if padj is None or not tape.nodes[pidx].needs_grad:
                continue
            if adjoints[pidx] is None:
                adjoints[pidx] = np.array(padj, dtype=np.float64)
            else:
                adjoints[pidx] += padj
    flat = np.zeros(sum(int(np.prod(s, dtype=int)) for _, _, s in tape.manifest))
    grad = ParamVector(flat, tape.manifest)
    by_name = dict(tape.param_nodes)
    for name, _offset, _shape in tape.manifest:
        adj = adjoints[by_name[name]]
        if adj is not None:
            grad.view(name)[...] = adj
    return grad


def grad_check(
    model: TppModel,
    batch: list[tuple[Scanpath, FeatureVolume]],
    epsilon: float = 1e-5,
    max_coords: int = 200,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between tape gradients and central finite differences.

    Checks up to ``max_coords`` coordinates (all of them when the model is
    small enough), sampled without replacement.
    """
    _, tape = forward_nll(model, batch)
    grad = backward(tape).flat
    pv = model.params
    if pv.size <= max_coords:
        coords = np.arange(pv.size)
    else:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(pv.size, size=max_coords, replace=False)
    worst = 0.0
    for i in coords:
        up = pv.flat.copy()
        up[i] += epsilon
        down = pv.flat.copy()
        down[i] -= epsilon
        loss_up, _ = forward_nll(TppModel(model.config, pv.with_flat(up)), batch)
        loss_down, _ = forward_nll(TppModel(model.config, pv.with_flat(down)), batch)
        fd = (loss_up - loss_down) / (2.0 * epsilon)
        rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst
