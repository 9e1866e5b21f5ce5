"""Collect edge pixels into ordered polylines and drop the straight ones."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

__all__ = ["Polyline", "collect_curved_lines", "collect_lines", "is_curved", "prune_lines"]

# traversal neighbour order: E, SE, S, SW, W, NW, N, NE
_DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


@dataclass(eq=False)
class Polyline:
    """Ordered 8-connected pixel chain; ``points`` is an ``(N, 2)`` array of ``(x, y)``."""

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]


@numba.njit(cache=True)
def _count_neighbors(img, y, x, dys, dxs):
    h, w = img.shape
    c = 0
    for k in range(8):
        yy = y + dys[k]
        xx = x + dxs[k]
        if 0 <= yy < h and 0 <= xx < w and img[yy, xx]:
            c += 1
    return c


@numba.njit(cache=True)
def _walk(img, visited, y, x, dys, dxs, out, n):
    h, w = img.shape
    while True:
        visited[y, x] = True
        out[n, 0] = x
        out[n, 1] = y
        n += 1
        moved = False
        for k in range(8):
            yy = y + dys[k]
            xx = x + dxs[k]
            if 0 <= yy < h and 0 <= xx < w and img[yy, xx] and not visited[yy, xx]:
                y = yy
                x = xx
                moved = True
                break
        if not moved:
            return n


@numba.njit(cache=True)
def _collect(img, dys, dxs):
    h, w = img.shape
    total = 0
    for y in range(h):
        for x in range(w):
            if img[y, x]:
                total += 1
    visited = np.zeros((h, w), dtype=np.bool_)
    pts = np.zeros((total, 2), dtype=np.int64)
    starts = np.zeros(total + 1, dtype=np.int64)
    second_phase = np.zeros(total, dtype=np.bool_)
    n = 0
    lines = 0
    for phase in range(2):
        for y in range(h):
            for x in range(w):
                if not img[y, x] or visited[y, x]:
                    continue
                if phase == 0 and _count_neighbors(img, y, x, dys, dxs) != 1:
                    continue
                starts[lines] = n
                second_phase[lines] = phase == 1
                n = _walk(img, visited, y, x, dys, dxs, pts, n)
                lines += 1
    starts[lines] = n
    return pts, starts[: lines + 1], second_phase[:lines]


def _traced(e):
    img = np.ascontiguousarray(np.asarray(e) != 0)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D edge image, got shape {img.shape}")
    return _collect(img, _DY, _DX)


def _make(p: np.ndarray, second: bool) -> Polyline:
    closed = False
    if second and len(p) >= 3:
        closed = bool(max(abs(p[-1, 0] - p[0, 0]), abs(p[-1, 1] - p[0, 1])) <= 1)
    return Polyline(p, closed=closed)


def collect_lines(e) -> list[Polyline]:
    """Trace every edge pixel into exactly one polyline.

    Open lines are started first, at pixels with exactly one neighbour; the
    remaining pixels (loops, isolated points) are then traced from the first
    unvisited pixel in raster order.  A loop whose last point touches its
    first is marked closed.
    """
    pts, starts, second = _traced(e)
    return [_make(pts[starts[i] : starts[i + 1]], second[i]) for i in range(len(starts) - 1)]


def is_curved(line, min_mean_line_dist: float = 3.0) -> bool:
    """Centroid test for curvature.

    A line is straight when some pixel lies closer than ``min_mean_line_dist``
    to the centroid of all its pixels, or when its extent along x or along y
    is below that distance.  Fewer than three points are always straight.
    """
    pts = np.asarray(line.points if isinstance(line, Polyline) else line, dtype=np.float64)
    if len(pts) < 3:
        return False
    extent = pts.max(axis=0) - pts.min(axis=0)
    if extent[0] < min_mean_line_dist or extent[1] < min_mean_line_dist:
        return False
    centroid = pts.mean(axis=0)
    d2 = ((pts - centroid) ** 2).sum(axis=1)
    return bool(np.sqrt(d2.min()) >= min_mean_line_dist)


def prune_lines(lines, min_mean_line_dist: float = 3.0, min_line_length: int = 5) -> list[Polyline]:
    """Keep curved lines with at least ``min_line_length`` points."""
    return [
        ln for ln in lines
        if len(ln) >= min_line_length and is_curved(ln, min_mean_line_dist)
    ]


@numba.njit(cache=True)
def _curved_flags(pts, starts, min_dist, min_len):
    nl = len(starts) - 1
    keep = np.zeros(nl, dtype=np.bool_)
    for i in range(nl):
        a = starts[i]
        b = starts[i + 1]
        n = b - a
        if n < min_len or n < 3:
            continue
        x_lo = x_hi = pts[a, 0]
        y_lo = y_hi = pts[a, 1]
        sx = 0.0
        sy = 0.0
        for k in range(a, b):
            x = pts[k, 0]
            y = pts[k, 1]
            x_lo = min(x_lo, x)
            x_hi = max(x_hi, x)
            y_lo = min(y_lo, y)
            y_hi = max(y_hi, y)
            sx += x
            sy += y
        if x_hi - x_lo < min_dist or y_hi - y_lo < min_dist:
            continue
        cx = sx / n
        cy = sy / n
        best = np.inf
        for k in range(a, b):
            dx = pts[k, 0] - cx
            dy = pts[k, 1] - cy
            best = min(best, dx * dx + dy * dy)
        keep[i] = math.sqrt(best) >= min_dist
    return keep


def collect_curved_lines(e, min_mean_line_dist: float = 3.0, min_line_length: int = 5) -> list[Polyline]:
    """``prune_lines(collect_lines(e), ...)`` without building the discarded lines."""
    pts, starts, second = _traced(e)
    keep = _curved_flags(pts, starts, float(min_mean_line_dist), int(min_line_length))
    return [_make(pts[starts[i] : starts[i + 1]], second[i]) for i in np.flatnonzero(keep)]
