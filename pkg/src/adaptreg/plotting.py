"""Minimal SVG writers for convergence histories and 2D element maps.

Presentation only; nothing here feeds back into computations.
"""
import math
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H, PAD = 480, 340, 52


def _scale(v, lo, hi, a, b, log):
    if log:
        v, lo, hi = np.log10(v), math.log10(lo), math.log10(hi)
    t = (v - lo) / (hi - lo) if hi > lo else 0.5 * np.ones_like(v)
    return a + t * (b - a)


def _finite(x, y, logx, logy):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    if logx:
        ok &= x > 0
    if logy:
        ok &= y > 0
    return x[ok], y[ok]


def line_chart(path, series, *, title="", xlabel="", ylabel="", logx=False, logy=True):
    """Write ``series = {label: (x, y)}`` as an SVG line chart."""
    pts = [_finite(x, y, logx, logy) for x, y in series.values()]
    xs = np.concatenate([p[0] for p in pts] or [np.zeros(1)])
    ys = np.concatenate([p[1] for p in pts] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.ones(1)
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD // 2}" width="{W - 1.5 * PAD}" height="{H - 1.5 * PAD}" '
           'fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<text x="{W / 2}" y="{H - 6}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
           f'<text x="12" y="{H / 2}" font-size="11" transform="rotate(-90 12 {H / 2})" '
           f'text-anchor="middle">{escape(ylabel)}</text>',
           f'<text x="{PAD}" y="{H - PAD + 14}" font-size="9">{x0:.3g}</text>',
           f'<text x="{W - PAD / 2}" y="{H - PAD + 14}" font-size="9" text-anchor="end">{x1:.3g}</text>',
           f'<text x="{PAD - 3}" y="{H - PAD}" font-size="9" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{PAD - 3}" y="{PAD // 2 + 8}" font-size="9" text-anchor="end">{y1:.3g}</text>']
    for k, (label, (x, y)) in enumerate(zip(series, pts)):
        if x.size == 0:
            continue
        px = _scale(x, x0, x1, PAD, W - PAD / 2, logx)
        py = _scale(y, y0, y1, H - PAD, PAD / 2, logy)
        c = _COLORS[k % len(_COLORS)]
        d = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{d}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD // 2 + 14 + 13 * k}" font-size="10" '
                   f'text-anchor="end" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def element_map(path, mesh, values, *, title="", log=True):
    """Colour each triangle by ``values`` (blue low, red high)."""
    v = np.asarray(values, float)
    s = np.log10(np.maximum(v, 1e-300)) if log else v
    lo, hi = s.min(), s.max()
    t = (s - lo) / (hi - lo) if hi > lo else np.zeros_like(s)
    size = 420
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 30}">',
           f'<text x="{size / 2}" y="16" text-anchor="middle" font-size="13">'
           f'{escape(title)} [{v.min():.2e}, {v.max():.2e}]</text>']
    xy = mesh.coords
    for tri, tt in zip(xy, t):
        r, b = int(255 * tt), int(255 * (1 - tt))
        d = " ".join(f"{10 + 400 * p[0]:.2f},{30 + 400 * (1 - p[1]):.2f}" for p in tri)
        out.append(f'<polygon points="{d}" fill="rgb({r},60,{b})" stroke="none"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
