"""Minimal SVG histogram with an overlaid density curve.

Output is canonical: fixed element order, fixed attribute order and numbers
printed with four decimals, so equal inputs give byte-identical files.
"""
from __future__ import annotations

from html import escape
from typing import Callable, Optional, Sequence

import numpy as np

WIDTH = 640
PANEL_HEIGHT = 360
MARGIN = 48


def _f(x: float) -> str:
    return f"{x:.4f}"


def _panel(values, density: Optional[Callable], title: str, top: float, bins: int) -> list:
    values = np.asarray(values, float)
    lo, hi = float(values.min()), float(values.max())
    if density is not None:
        spread = max(hi - lo, 1e-12)
        lo, hi = lo - 0.05 * spread, hi + 0.05 * spread
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    heights = counts / (values.size * np.diff(edges))
    xs = np.linspace(lo, hi, 201)
    curve = np.asarray(density(xs), float) if density is not None else None
    ymax = max(float(heights.max()), float(curve.max()) if curve is not None else 0.0)
    ymax = ymax * 1.05 if ymax > 0 else 1.0
    pw, ph = WIDTH - 2 * MARGIN, PANEL_HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - lo) / (hi - lo) * pw

    def py(y):
        return top + MARGIN + ph - y / ymax * ph

    out = [f'<text x="{_f(WIDTH / 2)}" y="{_f(top + MARGIN / 2)}" '
           f'text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{_f(MARGIN)}" y="{_f(top + MARGIN)}" width="{_f(pw)}" '
           f'height="{_f(ph)}" fill="none" stroke="#444"/>']
    for h, a, b in zip(heights, edges[:-1], edges[1:]):
        if h > 0:
            out.append(f'<rect x="{_f(px(a))}" y="{_f(py(h))}" width="{_f(px(b) - px(a))}" '
                       f'height="{_f(py(0) - py(h))}" fill="#9ecae1" stroke="#3182bd"/>')
    if curve is not None:
        pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(xs, curve))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    for x in (lo, 0.5 * (lo + hi), hi):
        out.append(f'<text x="{_f(px(x))}" y="{_f(top + MARGIN + ph + 18)}" '
                   f'text-anchor="middle" font-size="11">{x:.3g}</text>')
    return out


def histogram_svg(columns: Sequence, densities: Sequence[Optional[Callable]],
                  titles: Sequence[str], bins: int = 40) -> str:
    """One histogram panel per column, stacked vertically."""
    height = PANEL_HEIGHT * len(columns)
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
             f'viewBox="0 0 {WIDTH} {height}">',
             f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>']
    for i, (col, dens, title) in enumerate(zip(columns, densities, titles)):
        parts.extend(_panel(col, dens, title, i * PANEL_HEIGHT, bins))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
