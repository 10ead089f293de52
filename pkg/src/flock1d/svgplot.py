"""Minimal SVG line charts; no plotting dependency.

CSV is the source of truth for every experiment -- these charts are a quick
visual check only.  Polylines plus axes, ticks, and a small legend; optional
log scale on y (non-positive values are dropped from log plots).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
_W, _H = 720, 480
_ML, _MR, _MT, _MB = 72, 16, 36, 48


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(1, n - 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out or [lo]


def _log_ticks(lo: float, hi: float):
    lo_d, hi_d = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    return [10.0**d for d in range(lo_d, hi_d + 1) if lo <= 10.0**d <= hi]


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if 1e-3 <= abs(v) < 1e4:
        return f"{v:g}"
    return f"{v:.0e}"


def line_chart(path, x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "", logy: bool = False):
    """Write a polyline chart of the named series against x.

    ``series`` maps labels to arrays of y values (same length as x).  With
    ``logy`` the y axis is decade-scaled and non-positive points are skipped.
    """
    x = np.asarray(x, dtype=np.float64)
    ys = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}

    all_y = np.concatenate([v for v in ys.values()]) if ys else np.zeros(1)
    if logy:
        positive = all_y[np.isfinite(all_y) & (all_y > 0)]
        y_lo = float(positive.min()) if positive.size else 1e-12
        y_hi = float(positive.max()) if positive.size else 1.0
        if y_hi <= y_lo:
            y_hi = y_lo * 10
        ty = lambda v: math.log10(v)
        y_ticks = _log_ticks(y_lo, y_hi) or [y_lo, y_hi]
    else:
        finite = all_y[np.isfinite(all_y)]
        y_lo = float(finite.min()) if finite.size else 0.0
        y_hi = float(finite.max()) if finite.size else 1.0
        if y_hi <= y_lo:
            y_hi = y_lo + 1.0
        ty = lambda v: v
        y_ticks = _ticks(y_lo, y_hi)
    x_lo, x_hi = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    inner_w = _W - _ML - _MR
    inner_h = _H - _MT - _MB
    sx = lambda v: _ML + (v - x_lo) / (x_hi - x_lo) * inner_w
    sy = lambda v: _MT + (1 - (ty(v) - ty(y_lo)) / (ty(y_hi) - ty(y_lo))) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT + inner_h}" x2="{_ML + inner_w}" y2="{_MT + inner_h}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + inner_h}" stroke="black"/>',
        f'<text x="{_ML + inner_w / 2}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{_MT + inner_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + inner_h / 2})">{ylabel}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(f'<line x1="{px:.1f}" y1="{_MT + inner_h}" x2="{px:.1f}" y2="{_MT + inner_h + 4}" stroke="black"/>')
        parts.append(f'<text x="{px:.1f}" y="{_MT + inner_h + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in y_ticks:
        py = sy(t)
        parts.append(f'<line x1="{_ML - 4}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')

    for idx, (label, y) in enumerate(ys.items()):
        color = _COLORS[idx % len(_COLORS)]
        pts = []
        for xv, yv in zip(x, y):
            if not np.isfinite(yv) or (logy and yv <= 0):
                continue
            pts.append(f"{sx(xv):.2f},{sy(yv):.2f}")
        if pts:
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = _MT + 14 + 16 * idx
        parts.append(f'<line x1="{_ML + inner_w - 120}" y1="{ly - 4}" x2="{_ML + inner_w - 100}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_ML + inner_w - 94}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
