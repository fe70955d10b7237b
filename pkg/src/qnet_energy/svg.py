"""Minimal self-contained SVG charts with deterministic output."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import ValidationError

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)


@dataclass(frozen=True)
class Series:
    name: str
    xs: Sequence[float]
    ys: Sequence[float]

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.ys):
            raise ValidationError(f"series {self.name!r}: x and y lengths differ")


@dataclass(frozen=True)
class Axes:
    x_label: str = ""
    y_label: str = ""
    x_log: bool = False
    y_log: bool = False
    title: str = ""
    width: int = 720
    height: int = 480
    margin: tuple[int, int, int, int] = field(default=(40, 170, 60, 80))  # top, right, bottom, left


def _f(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.3g}"


def _usable(v: float, log: bool) -> bool:
    return math.isfinite(v) and (v > 0 or not log)


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9)
    ticks = []
    k = start
    while k * step <= hi + 1e-9 * step:
        ticks.append(round(k * step, 12))
        k += 1
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    stride = max(1, (b - a) // 8)
    return [10.0**e for e in range(a, b + 1, stride) if lo * (1 - 1e-9) <= 10.0**e <= hi * (1 + 1e-9)]


class _Scale:
    def __init__(self, lo: float, hi: float, log: bool, p0: float, p1: float) -> None:
        self.log = log
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi == lo:
            pad = abs(lo) * 0.05 or 1.0
            lo, hi = lo - pad, hi + pad
        self.lo, self.hi, self.p0, self.p1 = lo, hi, p0, p1

    def __call__(self, v: float) -> float:
        t = math.log10(v) if self.log else v
        return self.p0 + (t - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)

    def ticks(self) -> list[float]:
        if self.log:
            return _log_ticks(10**self.lo, 10**self.hi)
        return _nice_ticks(self.lo, self.hi)


def _header(axes: Axes, dropped: int) -> list[str]:
    w, h = axes.width, axes.height
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        'font-family="sans-serif" font-size="12">',
        f"<metadata>dropped-points: {dropped}</metadata>",
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
    ]


def emit_svg(series: Sequence[Series], axes: Axes = Axes()) -> str:
    """Line chart with one polyline per non-empty series.

    Non-finite points, and non-positive points on a log axis, are dropped
    and counted in the document metadata.
    """
    kept: list[tuple[str, list[tuple[float, float]]]] = []
    dropped = 0
    for s in series:
        pts = []
        for x, y in zip(s.xs, s.ys):
            x, y = float(x), float(y)
            if _usable(x, axes.x_log) and _usable(y, axes.y_log):
                pts.append((x, y))
            else:
                dropped += 1
        if pts:
            kept.append((s.name, pts))
    n_points = sum(len(p) for _, p in kept)
    if n_points < 2:
        raise ValidationError("a chart needs at least two plottable points")

    top, right, bottom, left = axes.margin
    xs = [x for _, pts in kept for x, _ in pts]
    ys = [y for _, pts in kept for _, y in pts]
    sx = _Scale(min(xs), max(xs), axes.x_log, left, axes.width - right)
    sy = _Scale(min(ys), max(ys), axes.y_log, axes.height - bottom, top)

    out = _header(axes, dropped)
    x0, x1, y0, y1 = left, axes.width - right, axes.height - bottom, top
    out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
    for t in sx.ticks():
        px = _f(sx(t))
        out.append(f'<line x1="{px}" y1="{y0}" x2="{px}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{y0 + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in sy.ticks():
        py = _f(sy(t))
        out.append(f'<line x1="{x0 - 5}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">{_label(t)}</text>')
    if axes.title:
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{top / 2:.2f}" text-anchor="middle" font-size="14">{escape(axes.title)}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{axes.height - 15}" text-anchor="middle">{escape(axes.x_label)}</text>')
    out.append(
        f'<text x="15" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {(y0 + y1) / 2:.2f})">{escape(axes.y_label)}</text>'
    )
    for i, (name, pts) in enumerate(kept):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"><title>{escape(name)}</title></polyline>')
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{x1 + 10}" y1="{ly}" x2="{x1 + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 + 35}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_bar_svg(groups: Sequence[tuple[str, Sequence[tuple[str, float]]]], axes: Axes = Axes()) -> str:
    """Stacked horizontal bars; each group is a bar of (label, share) segments."""
    if not groups:
        raise ValidationError("a bar chart needs at least one group")
    top, right, bottom, left = axes.margin
    x0, x1 = left + 40, axes.width - right
    band = (axes.height - top - bottom) / len(groups)
    out = _header(axes, 0)
    if axes.title:
        out.append(f'<text x="{axes.width / 2:.2f}" y="{top / 2:.2f}" text-anchor="middle" font-size="14">{escape(axes.title)}</text>')
    labels: list[str] = []
    for _, segs in groups:
        for lab, _ in segs:
            if lab not in labels:
                labels.append(lab)
    for gi, (gname, segs) in enumerate(groups):
        total = math.fsum(v for _, v in segs)
        if total <= 0:
            raise ValidationError(f"group {gname!r} has no positive segments")
        y = top + gi * band + band * 0.2
        out.append(f'<text x="{x0 - 8}" y="{y + band * 0.3:.2f}" text-anchor="end" dominant-baseline="middle">{escape(gname)}</text>')
        acc = 0.0
        for lab, v in segs:
            px = x0 + acc / total * (x1 - x0)
            wd = v / total * (x1 - x0)
            color = PALETTE[labels.index(lab) % len(PALETTE)]
            out.append(
                f'<rect x="{_f(px)}" y="{_f(y)}" width="{_f(wd)}" height="{_f(band * 0.6)}" fill="{color}">'
                f"<title>{escape(lab)}: {v / total:.4f}</title></rect>"
            )
            acc += v
    for i, lab in enumerate(labels):
        ly = top + 10 + 18 * i
        out.append(f'<rect x="{x1 + 10}" y="{ly - 6}" width="12" height="12" fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{x1 + 28}" y="{ly}" dominant-baseline="middle">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
