"""Dependency-free SVG line charts with shaded std bands.

Output is a pure function of the inputs: fixed number formatting, series
sorted by label, colours picked from the label.
"""
import hashlib
import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = {"IAC": "#1f77b4", "IACC": "#d62728", "JAC": "#2ca02c"}
FALLBACK = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#ff7f0e"]


def color_for(label):
    if label in PALETTE:
        return PALETTE[label]
    h = int(hashlib.sha256(label.encode()).hexdigest(), 16)
    return FALLBACK[h % len(FALLBACK)]


def _fmt(x):
    return f"{x:.2f}"


def _segments(y):
    """Index runs between NaNs, so gaps are never bridged."""
    seg = []
    for j, v in enumerate(y):
        if np.isnan(v):
            if seg:
                yield seg
            seg = []
        else:
            seg.append(j)
    if seg:
        yield seg


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def render_svg(series, title="", xlabel="step", ylabel="value", width=640, height=400):
    """``series`` maps label -> (x, mean, std or None). Returns SVG text."""
    if not series:
        raise ValueError("nothing to plot")
    ml, mr, mt, mb = 60, 120, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    xs, ys = [], []
    for label in sorted(series):
        x, m, s = series[label]
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        s = np.zeros_like(m) if s is None else np.nan_to_num(np.asarray(s, dtype=float))
        ok = ~np.isnan(m)
        xs.extend(x[ok])
        ys.extend((m - s)[ok])
        ys.extend((m + s)[ok])
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{mt + ph}" x2="{_fmt(px(t))}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{mt + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 4}" y1="{_fmt(py(t))}" x2="{ml}" y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{_fmt(py(t) + 3)}" text-anchor="end" font-family="sans-serif" font-size="10">{t:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, label in enumerate(sorted(series)):
        x, m, s = series[label]
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        col = color_for(label)
        if s is not None:
            s = np.asarray(s, dtype=float)
            for idx in _segments(np.where(np.isnan(s), np.nan, m)):
                upper = [f"{_fmt(px(x[j]))},{_fmt(py(m[j] + s[j]))}" for j in idx]
                lower = [f"{_fmt(px(x[j]))},{_fmt(py(m[j] - s[j]))}" for j in reversed(idx)]
                out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{col}" fill-opacity="0.2" stroke="none"/>')
        for idx in _segments(m):
            pts = " ".join(f"{_fmt(px(x[j]))},{_fmt(py(m[j]))}" for j in idx)
            out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}" font-family="sans-serif" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot(aggregates, path, metric="return", title=None):
    """Write one chart of ``metric`` with one series per label.

    ``aggregates`` maps label -> {metric: AggregateCurve}.
    """
    series = {}
    for label, curves in aggregates.items():
        c = curves.get(metric)
        if c is not None:
            series[label] = (c.steps, c.mean, c.std)
    svg = render_svg(series, title or metric, "update", metric)
    with open(path, "w") as fh:
        fh.write(svg)
    return path
