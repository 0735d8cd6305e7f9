"""Minimal SVG line plots of spectra, with optional reference-gap markers."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .specproc import Spectrum

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 1e-9 * span, step)]


def spectrum_svg(
    spectra: Sequence[Spectrum],
    gaps: Sequence[float] | None = None,
    title: str = "",
    width: int = 720,
    height: int = 360,
) -> str:
    """Each spectrum is scaled to its own maximum; gaps are drawn as dashed lines."""
    left, right, top, bottom = 60, 20, 30, 45
    pw, ph = width - left - right, height - top - bottom
    w_max = max(float(s.omega[-1]) for s in spectra) if spectra else 1.0
    w_max = w_max or 1.0

    def px(w):
        return left + pw * w / w_max

    def py(v):
        return top + ph * (1.0 - v)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{left}" y="{top - 10}" font-size="13">{escape(title)}</text>')
    for t in _nice_ticks(0.0, w_max):
        x = px(t)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">omega</text>')
    parts.append(
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2})">density (scaled)</text>'
    )
    for g in gaps or []:
        if 0 < g <= w_max:
            x = px(g)
            parts.append(
                f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + ph}" '
                'stroke="gray" stroke-dasharray="4 3"/>'
            )
    for i, s in enumerate(spectra):
        d = np.asarray(s.density, dtype=float)
        peak = d[1:].max() if len(d) > 1 else d.max()
        scale = peak if peak > 0 else 1.0
        vals = np.clip(d / scale, 0.0, 1.0)
        pts = " ".join(f"{px(w):.2f},{py(v):.2f}" for w, v in zip(s.omega, vals))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        parts.append(
            f'<text x="{left + pw - 5}" y="{top + 15 + 14 * i}" text-anchor="end" fill="{color}">'
            f"{escape(s.method)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
