"""Self-contained SVG rendering.  Output depends only on the inputs."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def maze_svg(grid, path=None, cell: int = 10) -> str:
    cells = grid.cells
    rows, cols = cells.shape
    h = rows * cell
    body = []
    for r, c in zip(*np.nonzero(cells)):
        body.append(f'<rect x="{c * cell}" y="{h - (r + 1) * cell}" width="{cell}" height="{cell}" fill="#333"/>')
    if path is not None and path.found:
        pts = " ".join(f"{_f((c + 0.5) * cell)},{_f(h - (r + 0.5) * cell)}" for r, c in path.waypoints)
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[1]}" stroke-width="2"/>')
    for (r, c), color in ((grid.start, PALETTE[2]), (grid.goal, PALETTE[0])):
        body.append(f'<circle cx="{_f((c + 0.5) * cell)}" cy="{_f(h - (r + 0.5) * cell)}" r="{cell / 2.5}" fill="{color}"/>')
    return _doc(cols * cell, h, body)


def road_svg(polyline, trace=None, size: float = 200.0, scale: float = 3.0) -> str:
    w = int(size * scale)

    def line(points, color, width):
        pts = " ".join(f"{_f(x * scale)},{_f(w - y * scale)}" for x, y in points)
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'

    body = [line(polyline.points, "#999", 8 * scale), line(polyline.points, "#fff", 1)]
    if trace is not None:
        body.append(line(trace.veh_points, PALETTE[1], 1.5))
    return _doc(w, w, body)


class _Axes:
    def __init__(self, lo, hi, width=560, height=320, margin=50):
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.width, self.height, self.margin = width, height, margin

    def y(self, v):
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.margin + (1 - frac) * (self.height - 2 * self.margin)

    def frame(self, title: str) -> list[str]:
        m, w, h = self.margin, self.width, self.height
        out = [
            f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
            f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
            f'<text x="{w / 2}" y="{m / 2}" text-anchor="middle" font-size="14">{title}</text>',
        ]
        for v in np.linspace(self.lo, self.hi, 5):
            out.append(f'<text x="{m - 5}" y="{_f(self.y(v) + 4)}" text-anchor="end" font-size="10">{v:.3g}</text>')
        return out


def boxplot_svg(samples: Mapping[str, Sequence[float]], title: str = "") -> str:
    values = [np.asarray(v, dtype=float) for v in samples.values()]
    allv = np.concatenate(values) if values else np.zeros(1)
    ax = _Axes(float(allv.min()), float(allv.max()))
    body = ax.frame(title)
    n = max(len(values), 1)
    slot = (ax.width - 2 * ax.margin) / n
    for i, (name, v) in enumerate(zip(samples, values)):
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        cx = ax.margin + slot * (i + 0.5)
        bw = slot * 0.5
        color = PALETTE[i % len(PALETTE)]
        body += [
            f'<line x1="{_f(cx)}" y1="{_f(ax.y(v.min()))}" x2="{_f(cx)}" y2="{_f(ax.y(v.max()))}" stroke="{color}"/>',
            f'<rect x="{_f(cx - bw / 2)}" y="{_f(ax.y(q3))}" width="{_f(bw)}" height="{_f(ax.y(q1) - ax.y(q3))}" '
            f'fill="white" stroke="{color}"/>',
            f'<line x1="{_f(cx - bw / 2)}" y1="{_f(ax.y(med))}" x2="{_f(cx + bw / 2)}" y2="{_f(ax.y(med))}" '
            f'stroke="{color}" stroke-width="2"/>',
            f'<text x="{_f(cx)}" y="{ax.height - ax.margin + 15}" text-anchor="middle" font-size="10">{name}</text>',
        ]
    return _doc(ax.width, ax.height, body)


def convergence_svg(curves: Mapping[str, tuple], title: str = "") -> str:
    """``curves[name] = (x, mean, lo, hi)``; draws the mean line over a min-max band."""
    ys = np.concatenate([np.concatenate([c[2], c[3]]) for c in curves.values()]) if curves else np.zeros(1)
    xs = np.concatenate([c[0] for c in curves.values()]) if curves else np.zeros(1)
    ax = _Axes(float(ys.min()), float(ys.max()))
    x0, x1 = float(xs.min()), float(xs.max())
    span = (x1 - x0) or 1.0

    def x(v):
        return ax.margin + (v - x0) / span * (ax.width - 2 * ax.margin)

    body = ax.frame(title)
    for i, (name, (cx, mean, lo, hi)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        band = [f"{_f(x(a))},{_f(ax.y(b))}" for a, b in zip(cx, hi)]
        band += [f"{_f(x(a))},{_f(ax.y(b))}" for a, b in zip(cx[::-1], lo[::-1])]
        body.append(f'<polygon points="{" ".join(band)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_f(x(a))},{_f(ax.y(b))}" for a, b in zip(cx, mean))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(
            f'<text x="{ax.width - ax.margin + 2}" y="{ax.margin + 12 * i}" font-size="10" fill="{color}">{name}</text>'
        )
    return _doc(ax.width + 60, ax.height, body)
