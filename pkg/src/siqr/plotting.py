"""Static SVG line charts of trajectories, with no external resources."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

SERIES = ("S", "I", "Q", "R", "N")
COLORS = {"S": "#1f77b4", "I": "#d62728", "Q": "#9467bd", "R": "#2ca02c", "N": "#555555"}
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class PlotSpec:
    series: tuple[str, ...] = ("I",)
    log_I: bool = False
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    title: str = ""
    path: str | None = None
    width: int = 720
    height: int = 420

    def __post_init__(self):
        if not self.series:
            raise ValueError("at least one series must be selected")
        bad = [s for s in self.series if s not in SERIES]
        if bad:
            raise ValueError(f"unknown series {bad}; choose from {SERIES}")
        if self.log_I and set(self.series) - {"I"}:
            raise ValueError("log scale is only supported for the I series alone")


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
        out.append(round(v, 12))
        v += step
    return out


def _label(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def render_svg(traj, spec: PlotSpec) -> str:
    """SVG text for the selected series of ``traj``; byte-stable for equal inputs."""
    t = np.asarray(traj.t, dtype=float)
    data = {s: np.asarray(getattr(traj, s), dtype=float) for s in spec.series}
    if spec.log_I:
        data = {"I": np.log10(np.maximum(data["I"], LOG_FLOOR))}
    x0, x1 = spec.x_range or (float(t[0]), float(t[-1]))
    if spec.y_range is not None:
        y0, y1 = spec.y_range
        if spec.log_I:
            y0, y1 = math.log10(max(y0, LOG_FLOOR)), math.log10(max(y1, LOG_FLOOR))
    else:
        allv = np.concatenate(list(data.values()))
        y0, y1 = float(np.min(allv)), float(np.max(allv))
        if not spec.log_I:
            y0 = min(y0, 0.0)
        if y1 - y0 <= 0:
            y1 = y0 + 1.0
    if x1 <= x0:
        x1 = x0 + 1.0
    W, H = spec.width, spec.height
    left, right, top, bottom = 70, 20, 36, 44
    pw, ph = W - left - right, H - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
           'stroke="#000000" stroke-width="1"/>']
    if spec.title:
        out.append(f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{escape(spec.title)}</text>')
    for v in _ticks(x0, x1):
        x = sx(v)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" '
                   'stroke="#000000"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{_label(v)}</text>')
    for v in _ticks(y0, y1):
        y = sy(v)
        txt = f"1e{int(round(v))}" if spec.log_I else _label(v)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#000000"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{txt}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 8}" text-anchor="middle" '
               'font-family="sans-serif" font-size="12">t</text>')
    ylab = "log10 I" if spec.log_I else ", ".join(spec.series)
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylab)}</text>')
    for name, vals in data.items():
        keep = (t >= x0) & (t <= x1)
        xs = np.clip([sx(v) for v in t[keep]], left, left + pw)
        ys = np.clip([sy(v) for v in vals[keep]], top, top + ph)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        color = COLORS["I" if spec.log_I else name]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    for i, name in enumerate(spec.series):
        y = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 60}" y1="{y}" x2="{left + pw - 40}" y2="{y}" '
                   f'stroke="{COLORS[name]}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 34}" y="{y + 4}" font-family="sans-serif" '
                   f'font-size="11">{name}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if spec.path is not None:
        with open(spec.path, "w", newline="") as fh:
            fh.write(text)
    return text
