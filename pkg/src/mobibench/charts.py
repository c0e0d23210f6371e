"""Figure-style SVG emission: ci vs date, one line per lookahead.

Pure string building with a fixed viewport and no timestamps, so charts
for identical inputs are byte-identical and diff cleanly.
"""

from __future__ import annotations

from datetime import date, timedelta
from typing import Sequence

from .metrics import CiPoint

WIDTH, HEIGHT = 960, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 150, 45, 55

# First entry (smallest lookahead) is the near-zero one; keep it orange so
# it stands apart from the longer horizons.
PALETTE = ["#e6862c", "#1f77b4", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def ci_chart_svg(points: Sequence[CiPoint], title: str) -> str:
    """Chart a ci series: one polyline per lookahead plus a zero line."""
    if not points:
        raise ValueError("cannot chart an empty ci series")
    lookaheads = sorted({p.lookahead for p in points})
    d0 = min(p.date for p in points)
    d1 = max(p.date for p in points)
    n_days = (d1 - d0).days
    ci_lo = min(p.ci for p in points)
    ci_hi = max(p.ci for p in points)
    ci_lo, ci_hi = min(ci_lo, 0.0), max(ci_hi, 0.0)
    pad = max((ci_hi - ci_lo) * 0.08, 0.02)
    ci_lo, ci_hi = ci_lo - pad, ci_hi + pad

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x_of(d: date) -> float:
        frac = (d - d0).days / n_days if n_days else 0.5
        return MARGIN_LEFT + frac * plot_w

    def y_of(ci: float) -> float:
        frac = (ci - ci_lo) / (ci_hi - ci_lo)
        return MARGIN_TOP + (1.0 - frac) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{MARGIN_LEFT}" y="25" font-family="sans-serif" font-size="16" '
        f'fill="#222222">{title}</text>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#cccccc"/>',
    ]

    # y ticks and labels
    n_yticks = 5
    for i in range(n_yticks):
        cv = ci_lo + (ci_hi - ci_lo) * i / (n_yticks - 1)
        y = y_of(cv)
        out.append(f'<line x1="{MARGIN_LEFT - 4}" y1="{_fmt(y)}" x2="{MARGIN_LEFT}" '
                   f'y2="{_fmt(y)}" stroke="#888888"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11" fill="#444444">{cv:.2f}</text>')
    out.append(f'<text x="18" y="{MARGIN_TOP + plot_h / 2:.0f}" font-family="sans-serif" '
               f'font-size="12" fill="#444444" transform="rotate(-90 18 '
               f'{MARGIN_TOP + plot_h / 2:.0f})" text-anchor="middle">'
               f'correlation improvement</text>')

    # x ticks: up to 7 dates across the range
    n_xticks = min(7, n_days + 1) if n_days else 1
    seen = set()
    for i in range(n_xticks):
        d = d0 + timedelta(days=round(n_days * i / max(n_xticks - 1, 1)))
        if d in seen:
            continue
        seen.add(d)
        x = x_of(d)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN_TOP + plot_h}" x2="{_fmt(x)}" '
                   f'y2="{MARGIN_TOP + plot_h + 4}" stroke="#888888"/>')
        out.append(f'<text x="{_fmt(x)}" y="{MARGIN_TOP + plot_h + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11" fill="#444444">{d.isoformat()}</text>')

    # zero reference line
    y0 = y_of(0.0)
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{_fmt(y0)}" x2="{MARGIN_LEFT + plot_w}" '
               f'y2="{_fmt(y0)}" stroke="#555555" stroke-dasharray="5,4"/>')

    # one line per lookahead
    for idx, lookahead in enumerate(lookaheads):
        color = PALETTE[idx % len(PALETTE)]
        pts = sorted((p for p in points if p.lookahead == lookahead), key=lambda p: p.date)
        coords = " ".join(f"{_fmt(x_of(p.date))},{_fmt(y_of(p.ci))}" for p in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.6"/>')
        ly = MARGIN_TOP + 14 + 20 * idx
        lx = MARGIN_LEFT + plot_w + 14
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2.5"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}" font-family="sans-serif" '
                   f'font-size="12" fill="#222222">lookahead {lookahead}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
