"""Standalone SVG charts: histograms, real/synthetic overlays, time series, heatmaps.

Output is plain SVG 1.1 text built by string formatting, with coordinates
rounded to two decimals so identical inputs give identical bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import DuplicateCellError, EmptySampleError, InvalidSpecError, UnknownColumnError, UnsortedXError
from .table import Table

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
MARGIN = (60.0, 20.0, 40.0, 50.0)  # left, right, top, bottom
PAD = 0.05


@dataclass(frozen=True)
class ChartSpec:
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    width: int = 640
    height: int = 400
    bins: int = 20
    ramp: tuple[str, str] = ("#f7fcb9", "#238443")
    kind: str = ""

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidSpecError("chart width and height must be > 0")
        if self.bins < 1:
            raise InvalidSpecError("bins must be >= 1")
        if self.width <= MARGIN[0] + MARGIN[1] or self.height <= MARGIN[2] + MARGIN[3]:
            raise InvalidSpecError("chart too small for its margins")


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class _Canvas:
    def __init__(self, spec: ChartSpec):
        self.spec = spec
        self.x0 = MARGIN[0]
        self.x1 = spec.width - MARGIN[1]
        self.y0 = MARGIN[2]
        self.y1 = spec.height - MARGIN[3]
        self.parts: list[str] = []

    @property
    def plot_w(self) -> float:
        return self.x1 - self.x0

    @property
    def plot_h(self) -> float:
        return self.y1 - self.y0

    def add(self, s: str) -> None:
        self.parts.append(s)

    def frame(self) -> None:
        s = self.spec
        self.add(f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.plot_w)}" '
                 f'height="{_f(self.plot_h)}" fill="none" stroke="#444444" stroke-width="1"/>')
        if s.title:
            self.add(f'<text x="{_f(s.width / 2)}" y="{_f(self.y0 / 2 + 6)}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{escape(s.title)}</text>')
        if s.x_label:
            self.add(f'<text x="{_f((self.x0 + self.x1) / 2)}" y="{_f(s.height - 10)}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">{escape(s.x_label)}</text>')
        if s.y_label:
            cx, cy = 16.0, (self.y0 + self.y1) / 2
            self.add(f'<text x="{_f(cx)}" y="{_f(cy)}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12" transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(s.y_label)}</text>')

    def ticks(self, lo: float, hi: float, axis: str, fmt=lambda v: f"{v:.4g}", n: int = 5) -> None:
        for i in range(n + 1):
            v = lo + (hi - lo) * i / n
            if axis == "x":
                x = self.x0 + self.plot_w * i / n
                self.add(f'<line x1="{_f(x)}" y1="{_f(self.y1)}" x2="{_f(x)}" y2="{_f(self.y1 + 4)}" stroke="#444444"/>')
                self.add(f'<text x="{_f(x)}" y="{_f(self.y1 + 16)}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="10">{escape(fmt(v))}</text>')
            else:
                y = self.y1 - self.plot_h * i / n
                self.add(f'<line x1="{_f(self.x0 - 4)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" stroke="#444444"/>')
                self.add(f'<text x="{_f(self.x0 - 6)}" y="{_f(y + 3)}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="10">{escape(fmt(v))}</text>')

    def legend(self, labels: Sequence[str], colors: Sequence[str]) -> None:
        for i, (label, color) in enumerate(zip(labels, colors)):
            y = self.y0 + 8 + 16 * i
            x = self.x1 - 110
            self.add(f'<rect class="legend" x="{_f(x)}" y="{_f(y)}" width="10" height="10" fill="{color}"/>')
            self.add(f'<text class="legend" x="{_f(x + 14)}" y="{_f(y + 9)}" font-family="sans-serif" '
                     f'font-size="11">{escape(label)}</text>')

    def render(self) -> str:
        s = self.spec
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{s.width}" height="{s.height}" '
                f'viewBox="0 0 {s.width} {s.height}">\n'
                f'<rect x="0" y="0" width="{s.width}" height="{s.height}" fill="#ffffff"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _sample(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptySampleError("cannot plot an empty sample")
    return v


def _edges(values: Sequence[np.ndarray], bins: int) -> np.ndarray:
    lo = min(float(v.min()) for v in values)
    hi = max(float(v.max()) for v in values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def _bars(c: _Canvas, heights: np.ndarray, top: float, color: str, cls: str, opacity: float = 1.0) -> None:
    w = c.plot_w / heights.size
    for i, h in enumerate(heights):
        bh = c.plot_h * (h / top) if top > 0 else 0.0
        c.add(f'<rect class="{cls}" x="{_f(c.x0 + i * w)}" y="{_f(c.y1 - bh)}" width="{_f(w)}" '
              f'height="{_f(bh)}" fill="{color}" fill-opacity="{opacity:.2f}" stroke="#ffffff" stroke-width="0.5"/>')


def render_histogram(sample, spec: ChartSpec = ChartSpec()) -> str:
    """Count histogram; the fullest bin spans the plot height."""
    spec.validate()
    v = _sample(sample)
    edges = _edges([v], spec.bins)
    counts = np.histogram(v, edges)[0].astype(float)
    c = _Canvas(spec)
    c.frame()
    _bars(c, counts, counts.max(), PALETTE[0], "bar")
    c.ticks(edges[0], edges[-1], "x")
    c.ticks(0.0, counts.max(), "y", fmt=lambda x: f"{x:.0f}")
    return c.render()


def render_compare(real, synth, spec: ChartSpec = ChartSpec()) -> str:
    """Overlay of two proportion histograms on shared bins, with legend."""
    spec.validate()
    a, b = _sample(real), _sample(synth)
    edges = _edges([a, b], spec.bins)
    p = np.histogram(a, edges)[0] / a.size
    q = np.histogram(b, edges)[0] / b.size
    top = max(p.max(), q.max())
    c = _Canvas(spec)
    c.frame()
    _bars(c, p, top, PALETTE[0], "bar-real", 0.5)
    _bars(c, q, top, PALETTE[1], "bar-synth", 0.5)
    c.ticks(edges[0], edges[-1], "x")
    c.ticks(0.0, top, "y", fmt=lambda x: f"{x:.3f}")
    c.legend(["real", "synthetic"], PALETTE[:2])
    return c.render()


def render_timeseries(table: Table, x: str, y: Sequence[str], spec: ChartSpec = ChartSpec()) -> str:
    """One polyline per ``y`` column against date or numeric ``x``.

    Both axes are padded by 5% of their span (a zero span is padded by 1 on
    each side), so a constant series sits at mid-height.
    """
    spec.validate()
    for col in [x, *y]:
        if col not in table:
            raise UnknownColumnError(f"unknown column {col!r}")
    if table.n_rows == 0:
        raise EmptySampleError("cannot plot an empty table")
    xs = table[x]
    is_date = table.dtype(x) == "date"
    xv = xs.astype("datetime64[D]").astype(np.int64).astype(float) if is_date else xs.astype(float)
    if np.any(np.diff(xv) < 0):
        raise UnsortedXError(f"column {x!r} is not sorted ascending")
    ys = [table[c].astype(float) for c in y]

    def padded(lo: float, hi: float) -> tuple[float, float]:
        span = hi - lo
        if span == 0:
            return lo - 1.0, hi + 1.0
        return lo - PAD * span, hi + PAD * span

    xlo, xhi = padded(float(xv.min()), float(xv.max()))
    ylo, yhi = padded(min(float(v.min()) for v in ys), max(float(v.max()) for v in ys))
    c = _Canvas(spec)
    c.frame()

    def px(v):
        return c.x0 + c.plot_w * (v - xlo) / (xhi - xlo)

    def py(v):
        return c.y1 - c.plot_h * (v - ylo) / (yhi - ylo)

    for i, (name, vals) in enumerate(zip(y, ys)):
        color = PALETTE[i % len(PALETTE)]
        if vals.size == 1:
            c.add(f'<circle class="series" data-name="{escape(name)}" cx="{_f(px(xv[0]))}" '
                  f'cy="{_f(py(vals[0]))}" r="3" fill="{color}"/>')
        else:
            pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(xv, vals))
            c.add(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" fill="none" '
                  f'stroke="{color}" stroke-width="1.5"/>')
    if is_date:
        fmt = lambda v: str(np.datetime64(int(round(v)), "D"))
    else:
        fmt = lambda v: f"{v:.4g}"
    c.ticks(xlo, xhi, "x", fmt=fmt, n=4)
    c.ticks(ylo, yhi, "y")
    c.legend(list(y), [PALETTE[i % len(PALETTE)] for i in range(len(y))])
    return c.render()


def _hex(color: str) -> np.ndarray:
    color = color.lstrip("#")
    return np.array([int(color[i:i + 2], 16) for i in (0, 2, 4)], dtype=float)


def ramp_color(t: float, ramp: tuple[str, str]) -> str:
    """Linear interpolation between two hex colours, ``t`` in [0, 1]."""
    a, b = _hex(ramp[0]), _hex(ramp[1])
    rgb = np.floor(a + (b - a) * min(1.0, max(0.0, t)) + 0.5).astype(int)
    return "#" + "".join(f"{v:02x}" for v in rgb)


def render_heatmap(grid: Table, spec: ChartSpec = ChartSpec(), x: str = "x", y: str = "y",
                   value: str = "value") -> str:
    """One rect per ``(x, y)`` cell coloured on the two-stop ramp over [min, max]."""
    spec.validate()
    for col in (x, y, value):
        if col not in grid:
            raise UnknownColumnError(f"unknown column {col!r}")
    if grid.n_rows == 0:
        raise EmptySampleError("cannot plot an empty grid")
    xs, ys, vs = grid[x], grid[y], grid[value].astype(float)
    cells = list(zip(xs.tolist(), ys.tolist()))
    if len(set(cells)) != len(cells):
        raise DuplicateCellError("grid has repeated (x, y) cells")
    ux = sorted(set(xs.tolist()))
    uy = sorted(set(ys.tolist()))
    ix = {v: i for i, v in enumerate(ux)}
    iy = {v: i for i, v in enumerate(uy)}
    lo, hi = float(vs.min()), float(vs.max())
    c = _Canvas(spec)
    cw, ch = c.plot_w / len(ux), c.plot_h / len(uy)
    for (cx, cy), v in zip(cells, vs):
        t = 0.0 if hi == lo else (v - lo) / (hi - lo)
        # y grows upward
        c.add(f'<rect class="cell" x="{_f(c.x0 + ix[cx] * cw)}" y="{_f(c.y1 - (iy[cy] + 1) * ch)}" '
              f'width="{_f(cw)}" height="{_f(ch)}" fill="{ramp_color(t, spec.ramp)}"/>')
    c.frame()
    c.legend([f"{lo:.4g}", f"{hi:.4g}"], list(spec.ramp))
    return c.render()


def save_svg(svg: str, path: str | os.PathLike) -> None:
    Path(path).write_text(svg, encoding="utf-8")
