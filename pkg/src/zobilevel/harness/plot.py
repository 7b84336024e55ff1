"""Dependency-free SVG line charts with a shaded min/max band per curve."""

from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

from ..core import ConfigError
from .runner import read_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
DASHES = ("", "6,3", "2,2", "8,3,2,3")


def curves_from_csv(paths) -> list:
    """Load aggregate or merged CSVs as ``[(label, rows)]``.

    Merged files (with a ``label`` column) yield one curve per label;
    aggregate files are labelled by their file stem.
    """
    curves = OrderedDict()
    for path in paths:
        rows = read_csv(path)
        for row in rows:
            label = row.get("label") or Path(path).stem.replace("_aggregate", "")
            curves.setdefault(label, []).append(
                {k: float(row[k]) for k in ("scaled_queries", "mean_norm", "min_norm", "max_norm")}
            )
    return list(curves.items())


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0**e for e in range(a, b + 1)]
    step = 10 ** math.floor(math.log10(max(hi - lo, 1e-300)))
    if (hi - lo) / step < 3:
        step /= 2
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step) + 1)]


def emit_svg(curves, axes: dict | None = None) -> str:
    """Render curves as an SVG document.

    Parameters
    ----------
    curves : list of (str, list of dict)
        Each row has ``scaled_queries``, ``mean_norm``, ``min_norm`` and
        ``max_norm``.
    axes : dict, optional
        ``log_y`` (bool), ``title``, ``xlabel``, ``ylabel``, ``width``,
        ``height``.
    """
    curves = [(label, rows) for label, rows in curves if rows]
    if not curves:
        raise ConfigError("no curve data to plot")
    axes = dict(axes or {})
    log_y = bool(axes.get("log_y", False))
    W, H = int(axes.get("width", 640)), int(axes.get("height", 420))
    left, right, top, bottom = 70, 20, 36, 50
    pw, ph = W - left - right, H - top - bottom

    xs = [r["scaled_queries"] for _, rows in curves for r in rows]
    ys = [v for _, rows in curves for r in rows for v in (r["min_norm"], r["max_norm"]) if not log_y or v > 0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = (min(ys), max(ys)) if ys else (1.0, 10.0)
    if log_y:
        y0, y1 = 10 ** math.floor(math.log10(y0)), 10 ** math.ceil(math.log10(y1))
        if y1 == y0:
            y1 = y0 * 10
    elif y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        if log_y:
            y = max(y, y0)
            t = (math.log10(y) - math.log10(y0)) / (math.log10(y1) - math.log10(y0))
        else:
            t = (y - y0) / (y1 - y0)
        return top + (1.0 - t) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if axes.get("title"):
        out.append(f'<text x="{W / 2:.2f}" y="20" text-anchor="middle" font-size="14">{escape(str(axes["title"]))}</text>')
    for t in _ticks(x0, x1, False):
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{t:g}</text>')
    for t in _ticks(y0, y1, log_y):
        out.append(f'<line x1="{left - 4}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{sy(t) + 3:.2f}" text-anchor="end" font-size="10">{t:g}</text>')
    xlabel = escape(str(axes.get("xlabel", "scaled queries")))
    ylabel = escape(str(axes.get("ylabel", "hypergradient norm")))
    out.append(f'<text x="{left + pw / 2:.2f}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.2f})">{ylabel}</text>'
    )
    for i, (label, rows) in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        dash = DASHES[i % len(DASHES)]
        upper = " ".join(f"{sx(r['scaled_queries']):.2f},{sy(r['max_norm']):.2f}" for r in rows)
        lower = " ".join(f"{sx(r['scaled_queries']):.2f},{sy(r['min_norm']):.2f}" for r in reversed(rows))
        mean = " ".join(f"{sx(r['scaled_queries']):.2f},{sy(r['mean_norm']):.2f}" for r in rows)
        out.append(f'<polygon class="band" points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        style = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline class="series" points="{mean}" fill="none" stroke="{color}" stroke-width="1.5"{style}/>')
        ly = top + 14 + 16 * i
        out.append(f'<g class="legend"><line x1="{left + pw - 120}" y1="{ly - 4}" x2="{left + pw - 100}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{style}/>')
        out.append(f'<text x="{left + pw - 95}" y="{ly}" font-size="11">{escape(label)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
