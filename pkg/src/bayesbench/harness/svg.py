"""Self-contained SVG chart of PLL(n) curves.

The document is written by hand so that the bytes depend only on the input
numbers: coordinates are rounded to two decimals and nothing else (dates,
random ids, font metrics) enters the output.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from ..errors import InputError

WIDTH, HEIGHT = 760, 440
LEFT, RIGHT, TOP, BOTTOM = 78, 190, 34, 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
DASHES = ("", "6 3", "2 2", "8 3 2 3")


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while first + k * step <= hi + 1e-9 * span:
        ticks.append(first + k * step)
        k += 1
    return ticks


def _label(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def _stroke(i: int) -> tuple[str, str]:
    return PALETTE[i % len(PALETTE)], DASHES[(i // len(PALETTE)) % len(DASHES)]


def render_pll_svg(curves, include_warmup: bool = False, title: str | None = None) -> str:
    """Render PLL curves: mean line plus min-max band per backend.

    Parameters
    ----------
    curves : list of PllCurve
        One curve per backend, x coordinate is the draw index ``1..len``.
    include_warmup : bool
        Shade the leading warmup draws of the curves that contain them.
    title : str, optional
        Heading above the plot area.

    Returns
    -------
    str
        The SVG document.
    """
    curves = list(curves)
    if not curves:
        raise InputError("need at least one curve to plot")
    if any(len(c) == 0 for c in curves):
        raise InputError("curves must not be empty")

    n_max = max(len(c) for c in curves)
    x_lo, x_hi = (0.5, 1.5) if n_max == 1 else (1.0, float(n_max))
    values = np.concatenate([np.concatenate([c.pll_min, c.pll_mean, c.pll_max]) for c in curves])
    finite = values[np.isfinite(values)]
    if finite.size:
        y_lo, y_hi = float(finite.min()), float(finite.max())
    else:
        y_lo, y_hi = -1.0, 1.0
    if y_hi - y_lo < 1e-12 * max(1.0, abs(y_hi)):
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        y = np.clip(np.nan_to_num(y, nan=y_lo, neginf=y_lo, posinf=y_hi), y_lo, y_hi)
        return TOP + (y_hi - y) / (y_hi - y_lo) * ph

    def pts(xs, ys):
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(xs), sy(ys)))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="20" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')

    n_warm = max((c.n_warmup for c in curves), default=0) if include_warmup else 0
    if n_warm > 0:
        x0, x1 = sx(x_lo), sx(min(float(n_warm), x_hi))
        out.append(f'<rect class="warmup" x="{x0:.2f}" y="{TOP}" width="{x1 - x0:.2f}" '
                   f'height="{ph}" fill="#000000" fill-opacity="0.07"/>')
        out.append(f'<text x="{x0 + 4:.2f}" y="{TOP + 14}" fill="#555555">warmup</text>')

    # axes and ticks
    out.append(f'<g stroke="#333333" stroke-width="1">'
               f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
               f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>')
    xticks = [t for t in _nice_ticks(x_lo, x_hi) if x_lo <= t <= x_hi] if n_max > 1 else [1.0]
    for t in xticks:
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" '
                   f'stroke="#333333"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = float(sy(t))
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{_label(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle">'
               'samples</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">predictive log likelihood</text>')

    # curves
    for i, c in enumerate(curves):
        color, dash = _stroke(i)
        xs = np.arange(1, len(c) + 1, dtype=float)
        band = pts(xs, c.pll_max) + " " + pts(xs[::-1], c.pll_min[::-1])
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<g class="backend" data-backend="{escape(c.backend_id, {chr(34): "&quot;"})}">')
        out.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{pts(xs, c.pll_mean)}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        out.append("</g>")

    # legend
    lx = LEFT + pw + 16
    for i, c in enumerate(curves):
        color, dash = _stroke(i)
        ly = TOP + 10 + 20 * i
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line class="legend" x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(c.backend_id)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
