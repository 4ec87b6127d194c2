"""Minimal static SVG charts: a shaded band, a mean line and observed points."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=64, right=16, top=32, bottom=48)


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(t)
        t += step
    return ticks


def band_chart(x_labels, mean, lower, upper, observed=None, title="", y_label=""):
    """Render one band chart and return the SVG document as a string.

    All series are indexed like ``x_labels``; NaN or None entries are
    skipped (the band polygon is split at gaps).
    """
    n = len(x_labels)
    extra = [] if observed is None else list(observed)
    values = _finite(list(mean) + list(lower) + list(upper) + extra)
    lo = min(0.0, min(values)) if values else 0.0
    hi = max(values) if values else 1.0
    ticks = _nice_ticks(lo, hi)
    lo, hi = min(lo, ticks[0]), max(hi, ticks[-1])
    if hi <= lo:
        hi = lo + 1.0

    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(i):
        return x0 + (x1 - x0) * (i / (n - 1) if n > 1 else 0.5)

    def sy(v):
        return y0 - (y0 - y1) * (v - lo) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]
    for t in ticks:
        y = sy(t)
        out.append(f'<line x1="{x0}" y1="{y:.2f}" x2="{x1}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.2f}" text-anchor="end" font-size="10" '
                   f'font-family="sans-serif">{t:g}</text>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    if y_label:
        out.append(f'<text x="14" y="{(y0 + y1) / 2:.1f}" font-size="11" font-family="sans-serif" '
                   f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})" text-anchor="middle">'
                   f'{escape(y_label)}</text>')
    if n:
        for i in sorted({0, n // 2, n - 1}):
            out.append(f'<text x="{sx(i):.2f}" y="{y0 + 16}" text-anchor="middle" font-size="10" '
                       f'font-family="sans-serif">{escape(str(x_labels[i]))}</text>')

    # band polygons, one per run of defined days
    run = []
    runs = []
    for i in range(n):
        if _finite([lower[i], upper[i]]) == [lower[i], upper[i]]:
            run.append(i)
        elif run:
            runs.append(run)
            run = []
    if run:
        runs.append(run)
    for r in runs:
        pts = [f"{sx(i):.2f},{sy(upper[i]):.2f}" for i in r]
        pts += [f"{sx(i):.2f},{sy(lower[i]):.2f}" for i in reversed(r)]
        out.append(f'<polygon points="{" ".join(pts)}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>')

    line = [f"{sx(i):.2f},{sy(mean[i]):.2f}" for i in range(n) if _finite([mean[i]])]
    if line:
        out.append(f'<polyline points="{" ".join(line)}" fill="none" stroke="#08519c" stroke-width="1.5"/>')
    if observed is not None:
        for i, v in enumerate(observed):
            if _finite([v]):
                out.append(f'<circle cx="{sx(i):.2f}" cy="{sy(v):.2f}" r="2" fill="#cb181d"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
