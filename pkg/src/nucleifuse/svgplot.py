"""Minimal deterministic SVG emission for line plots and bar histograms.

Plots are conveniences only; the numbers behind every plot are also emitted
as CSV, which is the source of truth.
"""

from __future__ import annotations

_WIDTH, _HEIGHT = 640, 400
_MARGIN = 50
_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def line_plot(series: dict, x_labels, title: str = "") -> str:
    """Polyline plot of one series per dict entry over categorical x labels."""
    all_y = [y for ys in series.values() for y in ys]
    lo, hi = min(all_y), max(all_y)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    n = len(x_labels)
    xs = _scale(range(n), 0, max(n - 1, 1), _MARGIN, _WIDTH - _MARGIN)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<text x="{_WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
    ]
    for i, label in enumerate(x_labels):
        parts.append(
            f'<text x="{xs[i]:.1f}" y="{_HEIGHT - _MARGIN + 16}" text-anchor="middle" '
            f'font-size="10">{label}</text>'
        )
    for k, (name, ys) in enumerate(series.items()):
        pix = _scale(ys, lo, hi, _HEIGHT - _MARGIN, _MARGIN)
        points = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, pix))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{_WIDTH - _MARGIN + 4}" y="{_MARGIN + 14 * k}" font-size="10" '
            f'fill="{color}">{name}</text>'
        )
    parts.append(f'<text x="12" y="{_MARGIN}" font-size="10">{hi:.4f}</text>')
    parts.append(f'<text x="12" y="{_HEIGHT - _MARGIN}" font-size="10">{lo:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_grid(edges, counts, row_titles, title: str = "") -> str:
    """One bar chart per row of `counts`, stacked vertically."""
    n_rows, n_bins = counts.shape
    panel_h = 120
    height = 30 + n_rows * (panel_h + 30)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}">',
        f'<text x="{_WIDTH // 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    bar_w = (_WIDTH - 2 * _MARGIN) / n_bins
    for r in range(n_rows):
        top = 30 + r * (panel_h + 30)
        peak = max(int(counts[r].max()), 1)
        parts.append(
            f'<text x="{_MARGIN}" y="{top + 12}" font-size="11">{row_titles[r]}</text>'
        )
        for b in range(n_bins):
            h = counts[r, b] / peak * (panel_h - 20)
            x = _MARGIN + b * bar_w
            y = top + panel_h - h
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 2:.1f}" height="{h:.1f}" '
                f'fill="{_COLORS[r % len(_COLORS)]}"/>'
            )
        parts.append(
            f'<line x1="{_MARGIN}" y1="{top + panel_h}" x2="{_WIDTH - _MARGIN}" '
            f'y2="{top + panel_h}" stroke="black"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
