"""Tiny deterministic SVG emitter for histogram overlays.

Hand-rolled so that identical inputs produce byte-identical files; only the
handful of drawing features the reports need.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

_COLORS = ("#3b6fb6", "#d1603d", "#5b9e62", "#8a5fb0")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 40, 50


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def shared_edges(series: Sequence[np.ndarray], bins: int) -> np.ndarray:
    pooled = np.concatenate([np.asarray(s, dtype=float) for s in series if len(s)])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def histogram_overlay_svg(
    series: Sequence[tuple[str, np.ndarray]],
    path: str,
    bins: int = 20,
    title: str = "",
    x_label: str = "",
) -> None:
    """Write overlaid density histograms of the given (label, samples) series."""
    named = [(label, np.asarray(s, dtype=float)) for label, s in series if len(s)]
    if not named:
        raise ValueError("no samples to plot")
    edges = shared_edges([s for _, s in named], bins)
    hists = [np.histogram(s, bins=edges, density=True)[0] for _, s in named]
    y_max = max(h.max() for h in hists) or 1.0

    plot_w, plot_h = _W - _ML - _MR, _H - _MT - _MB
    x_span = edges[-1] - edges[0]

    def sx(v: float) -> float:
        return _ML + (v - edges[0]) / x_span * plot_w

    def sy(v: float) -> float:
        return _MT + plot_h - v / y_max * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
    ]
    for idx, ((label, _), hist) in enumerate(zip(named, hists)):
        color = _COLORS[idx % len(_COLORS)]
        for j, h in enumerate(hist):
            if h <= 0:
                continue
            x0, x1 = sx(edges[j]), sx(edges[j + 1])
            out.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(sy(h))}" width="{_fmt(x1 - x0)}" '
                f'height="{_fmt(_MT + plot_h - sy(h))}" fill="{color}" fill-opacity="0.45"/>'
            )
        out.append(
            f'<rect x="{_W - _MR - 150}" y="{_MT + 18 * idx}" width="12" height="12" '
            f'fill="{color}" fill-opacity="0.45"/>'
            f'<text x="{_W - _MR - 133}" y="{_MT + 18 * idx + 11}" '
            f'font-family="sans-serif" font-size="12">{label}</text>'
        )
    axis = (
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_ML + plot_w}" y2="{_MT + plot_h}" '
        f'stroke="black"/><line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + plot_h}" '
        f'stroke="black"/>'
    )
    out.append(axis)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = edges[0] + frac * x_span
        out.append(
            f'<text x="{_fmt(sx(xv))}" y="{_MT + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(xv)}</text>'
        )
        yv = frac * y_max
        out.append(
            f'<text x="{_ML - 6}" y="{_fmt(sy(yv) + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(yv)}</text>'
        )
    out.append(
        f'<text x="{_ML + plot_w / 2}" y="{_H - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{x_label}</text>'
    )
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
