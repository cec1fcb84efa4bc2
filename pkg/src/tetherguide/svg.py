"""Minimal SVG line plots written by hand, so plotting needs no rendering library."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None
    dashed: bool = False


@dataclass
class Panel:
    title: str
    series: list = field(default_factory=list)
    xlabel: str = ""
    ylabel: str = ""
    equal_aspect: bool = False


def _thin(x, y, limit=2000):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) > limit:
        idx = np.unique(np.linspace(0, len(x) - 1, limit).astype(int))
        x, y = x[idx], y[idx]
    return x, y


def _range(values):
    if not values:
        return 0.0, 1.0
    v = np.concatenate(values)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        pad = max(abs(lo), 1.0) * 0.05
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _panel_svg(panel: Panel, ox, oy, w, h):
    ml, mr, mt, mb = 60, 15, 25, 35
    pw, ph = w - ml - mr, h - mt - mb
    data = [_thin(s.x, s.y) for s in panel.series]
    x0, x1 = _range([d[0] for d in data if len(d[0])])
    y0, y1 = _range([d[1] for d in data if len(d[1])])
    if panel.equal_aspect:
        scale = max((x1 - x0) / pw, (y1 - y0) / ph)
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        x0, x1 = cx - 0.5 * scale * pw, cx + 0.5 * scale * pw
        y0, y1 = cy - 0.5 * scale * ph, cy + 0.5 * scale * ph

    def px(x):
        return ox + ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return oy + mt + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<rect x="{ox + ml}" y="{oy + mt}" width="{pw}" height="{ph}" fill="white" stroke="#444"/>',
        f'<text x="{ox + ml + pw / 2}" y="{oy + 16}" text-anchor="middle" font-size="13">{escape(panel.title)}</text>',
        f'<text x="{ox + ml + pw / 2}" y="{oy + h - 4}" text-anchor="middle" font-size="11">{escape(panel.xlabel)}</text>',
        f'<text x="{ox + 12}" y="{oy + mt + ph / 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 {ox + 12} {oy + mt + ph / 2})">{escape(panel.ylabel)}</text>',
    ]
    for v in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(v):.1f}" y="{oy + mt + ph + 13}" text-anchor="middle" font-size="9">{v:.3g}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ox + ml - 4}" y="{py(v) + 3:.1f}" text-anchor="end" font-size="9">{v:.3g}</text>')
    for i, (s, (x, y)) in enumerate(zip(panel.series, data)):
        if len(x) == 0:
            continue
        color = s.color or PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3"{dash} points="{pts}"/>')
        if s.label:
            ly = oy + mt + 12 + 13 * i
            out.append(f'<line x1="{ox + ml + pw - 110}" y1="{ly - 4}" x2="{ox + ml + pw - 92}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{ox + ml + pw - 88}" y="{ly}" font-size="10">{escape(s.label)}</text>')
    return out


def write_svg(path, panels, width=720, panel_height=300) -> None:
    """Stack ``panels`` vertically into one SVG file."""
    h = panel_height * len(panels)
    body = []
    for i, p in enumerate(panels):
        body += _panel_svg(p, 0, i * panel_height, width, panel_height)
    doc = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" '
           f'viewBox="0 0 {width} {h}" font-family="sans-serif">\n' + "\n".join(body) + "\n</svg>\n")
    with open(path, "w") as fh:
        fh.write(doc)
