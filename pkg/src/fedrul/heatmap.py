"""Minimal SVG rendering of a correlation matrix."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .preprocess import CorrelationMatrix

# coefficient -> color: -1 black, 0 red-orange, +1 light tan
_STOPS = [(-1.0, (0, 0, 0)), (0.0, (214, 72, 36)), (1.0, (250, 236, 212))]


def ramp(value: float) -> str:
    v = float(np.clip(value, -1.0, 1.0))
    for (x0, c0), (x1, c1) in zip(_STOPS, _STOPS[1:]):
        if v <= x1:
            f = (v - x0) / (x1 - x0)
            rgb = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_STOPS[-1][1])


def render_svg(cm: CorrelationMatrix, cell: int = 22, title: str = "") -> str:
    n = len(cm.labels)
    margin = 60
    top = margin + (20 if title else 0)
    width = margin + n * cell + 10
    height = top + n * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="9">'
    ]
    if title:
        parts.append(f'<text x="{margin}" y="14" font-size="12">{escape(title)}</text>')
    for i, label in enumerate(cm.labels):
        y = top + i * cell + cell * 0.65
        parts.append(f'<text x="{margin - 4}" y="{y:.1f}" text-anchor="end">{escape(label)}</text>')
        x = margin + i * cell + cell * 0.5
        parts.append(
            f'<text x="{x:.1f}" y="{top - 4}" text-anchor="start" '
            f'transform="rotate(-60 {x:.1f} {top - 4})">{escape(label)}</text>'
        )
    for i in range(n):
        for j in range(n):
            v = cm.values[i, j]
            parts.append(
                f'<rect x="{margin + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                f'fill="{ramp(v)}"><title>{escape(cm.labels[i])} / {escape(cm.labels[j])}: {v:.3f}</title></rect>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
