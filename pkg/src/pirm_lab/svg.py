"""Minimal deterministic SVG line charts.

Every number is written with fixed precision so that identical inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

COLORS = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)

N_TICKS = 12
PANEL_W = 560
PANEL_H = 400
MARGIN = dict(left=90, right=150, top=50, bottom=60)


@dataclass(frozen=True)
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]


@dataclass(frozen=True)
class Panel:
    title: str
    x_label: str
    y_label: str
    series: Sequence[Series]
    log_x: bool = False


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def _span(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = abs(lo) * 0.5 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def panel_ranges(panel: Panel) -> tuple[tuple[float, float], tuple[float, float]]:
    xs = [x for s in panel.series for x in s.xs]
    ys = [y for s in panel.series for y in s.ys]
    if not xs:
        raise ValueError(f"panel {panel.title!r} has no points")
    if panel.log_x:
        if min(xs) <= 0:
            raise ValueError("log-scaled x axis needs positive values")
        xs = [math.log10(x) for x in xs]
    return _span(xs), _span(ys)


def _render_panel(panel: Panel, ox: float, oy: float) -> list[str]:
    (x0, x1), (y0, y1) = panel_ranges(panel)
    left = ox + MARGIN["left"]
    right = ox + PANEL_W - MARGIN["right"]
    top = oy + MARGIN["top"]
    bottom = oy + PANEL_H - MARGIN["bottom"]

    def px(x: float) -> float:
        if panel.log_x:
            x = math.log10(x)
        return left + (x - x0) / (x1 - x0) * (right - left)

    def py(y: float) -> float:
        return bottom - (y - y0) / (y1 - y0) * (bottom - top)

    out = [
        f'<text x="{_fmt((left + right) / 2)}" y="{_fmt(oy + 28)}" '
        f'text-anchor="middle" font-size="16">{_escape(panel.title)}</text>',
        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(right - left)}" '
        f'height="{_fmt(bottom - top)}" fill="none" stroke="#333"/>',
    ]
    for k in range(N_TICKS):
        frac = k / (N_TICKS - 1)
        yv = y0 + frac * (y1 - y0)
        yp = py(yv)
        out.append(
            f'<line x1="{_fmt(left - 4)}" y1="{_fmt(yp)}" x2="{_fmt(right)}" '
            f'y2="{_fmt(yp)}" stroke="#ddd"/>'
        )
        out.append(
            f'<text x="{_fmt(left - 6)}" y="{_fmt(yp + 4)}" text-anchor="end" '
            f'font-size="10">{_tick_label(yv)}</text>'
        )
        xv = x0 + frac * (x1 - x0)
        xp = left + frac * (right - left)
        label = _tick_label(10**xv if panel.log_x else xv)
        out.append(
            f'<line x1="{_fmt(xp)}" y1="{_fmt(bottom)}" x2="{_fmt(xp)}" '
            f'y2="{_fmt(bottom + 4)}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{_fmt(xp)}" y="{_fmt(bottom + 16)}" text-anchor="middle" '
            f'font-size="10">{label}</text>'
        )
    out.append(
        f'<text x="{_fmt((left + right) / 2)}" y="{_fmt(bottom + 40)}" '
        f'text-anchor="middle" font-size="12">{_escape(panel.x_label)}</text>'
    )
    out.append(
        f'<text x="{_fmt(ox + 18)}" y="{_fmt((top + bottom) / 2)}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 {_fmt(ox + 18)} {_fmt((top + bottom) / 2)})">'
        f"{_escape(panel.y_label)}</text>"
    )
    for i, s in enumerate(panel.series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(s.xs, s.ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in zip(s.xs, s.ys):
            out.append(
                f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>'
            )
        ly = top + 14 + 18 * i
        out.append(
            f'<line x1="{_fmt(right + 12)}" y1="{_fmt(ly - 4)}" x2="{_fmt(right + 32)}" '
            f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_fmt(right + 38)}" y="{_fmt(ly)}" font-size="11">'
            f"{_escape(s.label)}</text>"
        )
    return out


def render(panels: Sequence[Panel]) -> str:
    """Lay panels out side by side in one SVG document."""
    if not panels:
        raise ValueError("nothing to render")
    width = PANEL_W * len(panels)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
        f'viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width}" height="{PANEL_H}" fill="#ffffff"/>',
    ]
    for i, panel in enumerate(panels):
        lines.extend(_render_panel(panel, PANEL_W * i, 0))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
