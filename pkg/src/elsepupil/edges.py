"""Edge-image filtering so that surviving lines can be ellipse arcs.

The morphologic path thins the Canny output, deletes junction pixels,
straightens small staircase defects and cuts orthogonal connections.  The
algorithmic path splits an ordered polyline wherever its course stops being
consistent with a single convex arc.

Pattern masks are written as text grids:

    ``.`` don't care, ``1`` must be set, ``0`` must be clear,
    ``D`` must be set and is deleted, ``A`` must be clear and is added.

Every base motif is applied in all eight rotations/mirrorings.  A mask is
anchored on its first ``D`` cell in raster order, so it is only tried at edge
pixels.  Masks are applied in place during one raster scan (top-left to
bottom-right): an edit is visible to every later window of the same scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "PatternSet",
    "break_line_algorithmic",
    "break_orthogonals",
    "delete_junctions",
    "filter_edges_morphologic",
    "neighbor_count",
    "straighten_edges",
    "thin_edges",
    "THINNING",
    "STRAIGHTENING",
    "ORTHOGONAL_BREAKS",
]

_CODES = {".": 0, "1": 1, "0": 2, "D": 3, "A": 4}

# Single-pixel bump on an axis-aligned line: move the bump back into line.
_BUMP = """
. 0 0 0 .
. 0 D 0 .
1 1 A 1 1
. 0 0 0 .
"""

# Diagonal line with a two-pixel detour around its middle pixel.
_DETOUR = """
1 0 0 0 .
0 1 D 0 0
. 0 A D 0
. 0 0 1 .
. . . 0 1
"""

# Axis-aligned corner whose corner pixel was already thinned away.
_CUT_CORNER = """
. 0 0 0 .
1 1 D 0 .
. 0 0 1 0
. . 0 1 .
. . . 1 .
"""

# Axis-aligned corner with the corner pixel present (four-connected L).
_FULL_CORNER = """
. 0 0 0
1 D D 0
. 0 1 0
. . 1 .
"""

# Two diagonal runs meeting at a single apex pixel.
_DIAGONAL_APEX = """
1 . 0 . 1
. 1 0 1 .
. 0 D 0 .
. 0 0 0 .
"""

# Two diagonal runs meeting through a flat two-pixel top.
_DIAGONAL_FLAT = """
. 0 0 0 0 .
. 0 D 1 0 .
. 1 0 0 1 .
1 . . . . 1
"""


# ring order N, NE, E, SE, S, SW, W, NW
_RING_DY = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
_RING_DX = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
_RING_BIT = {(int(dy), int(dx)): i for i, (dy, dx) in enumerate(zip(_RING_DY, _RING_DX))}


def _ring_component_table() -> np.ndarray:
    """Number of 8-connected groups among the set ring pixels, for every ring code."""
    table = np.zeros(256, dtype=np.int64)
    for code in range(256):
        on = [(code >> i) & 1 for i in range(8)]
        seen = [False] * 8
        count = 0
        for s in range(8):
            if not on[s] or seen[s]:
                continue
            count += 1
            todo = [s]
            seen[s] = True
            while todo:
                i = todo.pop()
                # ring neighbours touch; two 4-neighbours (even indices) two apart touch diagonally
                steps = (1, 7, 2, 6) if i % 2 == 0 else (1, 7)
                for step in steps:
                    j = (i + step) % 8
                    if on[j] and not seen[j]:
                        seen[j] = True
                        todo.append(j)
        table[code] = count
    return table


_RING_COMPONENTS = _ring_component_table()


def _parse(text: str) -> np.ndarray:
    rows = [line.split() for line in text.strip().splitlines()]
    return np.array([[_CODES[c] for c in row] for row in rows], dtype=np.int8)


def _symmetries(mask: np.ndarray) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    seen = set()
    for flip in (False, True):
        m = np.fliplr(mask) if flip else mask
        for k in range(4):
            r = np.ascontiguousarray(np.rot90(m, k))
            key = (r.shape, r.tobytes())
            if key not in seen:
                seen.add(key)
                out.append(r)
    return out


@dataclass(frozen=True)
class PatternSet:
    """A family of masks packed for the raster-scan kernel.

    ``cells[k, j] = (dy, dx, code)`` lists the constrained cells of mask ``k``
    relative to its anchor; only the first ``ncells[k]`` rows are used.
    ``ring_on[k]``/``ring_off[k]`` are the anchor-ring bits the mask needs set
    or clear, a cheap necessary condition tried before the full match.
    ``by_ring[by_ring_start[c]:by_ring_start[c + 1]]`` are the masks, in order,
    whose ring condition holds for ring code ``c``.
    """

    name: str
    masks: tuple[np.ndarray, ...]
    cells: np.ndarray
    ncells: np.ndarray
    ring_on: np.ndarray
    ring_off: np.ndarray
    by_ring_start: np.ndarray
    by_ring: np.ndarray

    @classmethod
    def from_text(cls, name: str, *grids: str) -> PatternSet:
        masks = []
        for grid in grids:
            masks.extend(_symmetries(_parse(grid)))
        for m in masks:
            if not np.any((m == 3) | (m == 4)):
                raise ValueError(f"{name}: every mask needs a delete or add cell")
        packed = []
        for m in masks:
            dels = np.argwhere(m == 3)
            ay, ax = dels[0]
            cells = [
                (y - ay, x - ax, int(m[y, x]))
                for y, x in np.argwhere(m != 0)
            ]
            packed.append(cells)
        width = max(len(c) for c in packed)
        cells_arr = np.zeros((len(packed), width, 3), dtype=np.int64)
        ncells = np.zeros(len(packed), dtype=np.int64)
        ring_on = np.zeros(len(packed), dtype=np.int64)
        ring_off = np.zeros(len(packed), dtype=np.int64)
        for k, cells in enumerate(packed):
            cells_arr[k, : len(cells)] = cells
            ncells[k] = len(cells)
            for dy, dx, code in cells:
                bit = _RING_BIT.get((dy, dx))
                if bit is None:
                    continue
                if code in (1, 3):
                    ring_on[k] |= 1 << bit
                else:
                    ring_off[k] |= 1 << bit
        codes = np.arange(256)[:, None]
        fits = ((codes & ring_on) == ring_on) & ((codes & ring_off) == 0)
        start = np.zeros(257, dtype=np.int64)
        start[1:] = np.cumsum(fits.sum(axis=1))
        by_ring = np.nonzero(fits)[1].astype(np.int64)
        return cls(name, tuple(masks), cells_arr, ncells, ring_on, ring_off, start, by_ring)

    def __len__(self) -> int:
        return len(self.masks)


STRAIGHTENING = PatternSet.from_text("straighten", _BUMP, _DETOUR)
ORTHOGONAL_BREAKS = PatternSet.from_text(
    "orthogonal", _CUT_CORNER, _FULL_CORNER, _DIAGONAL_APEX, _DIAGONAL_FLAT
)
# thinning is a dedicated kernel: corner pixel with two orthogonal 4-neighbours
THINNING = PatternSet.from_text("thin", ". 1 .\n. D 1\n. . .")


@numba.njit(cache=True)
def _ring_code(img, y, x, dys, dxs):
    h, w = img.shape
    code = 0
    for i in range(8):
        yy = y + dys[i]
        xx = x + dxs[i]
        if 0 <= yy < h and 0 <= xx < w and img[yy, xx] != 0:
            code |= 1 << i
    return code


@numba.njit(cache=True)
def _apply_patterns(img, cells, ncells, by_ring_start, by_ring, dys, dxs):
    h, w = img.shape
    changed = 0
    for y in range(h):
        for x in range(w):
            if img[y, x] == 0:
                continue
            ring = _ring_code(img, y, x, dys, dxs)
            for t in range(by_ring_start[ring], by_ring_start[ring + 1]):
                k = by_ring[t]
                ok = True
                for j in range(ncells[k]):
                    yy = y + cells[k, j, 0]
                    xx = x + cells[k, j, 1]
                    code = cells[k, j, 2]
                    inside = 0 <= yy < h and 0 <= xx < w
                    v = img[yy, xx] if inside else 0
                    if code == 1 or code == 3:
                        if v == 0:
                            ok = False
                            break
                    elif code == 2:
                        if v != 0:
                            ok = False
                            break
                    else:
                        if v != 0 or not inside:
                            ok = False
                            break
                if ok:
                    for j in range(ncells[k]):
                        code = cells[k, j, 2]
                        if code == 3:
                            img[y + cells[k, j, 0], x + cells[k, j, 1]] = 0
                        elif code == 4:
                            img[y + cells[k, j, 0], x + cells[k, j, 1]] = 1
                    changed += 1
                    break
    return changed


@numba.njit(cache=True)
def _thin_pass(img, dys, dxs, components):
    h, w = img.shape
    changed = 0
    for y in range(h):
        for x in range(w):
            if img[y, x] == 0:
                continue
            n = y > 0 and img[y - 1, x] != 0
            s = y < h - 1 and img[y + 1, x] != 0
            e = x < w - 1 and img[y, x + 1] != 0
            wst = x > 0 and img[y, x - 1] != 0
            if not ((n and e) or (e and s) or (s and wst) or (wst and n)):
                continue
            if components[_ring_code(img, y, x, dys, dxs)] == 1:
                img[y, x] = 0
                changed += 1
    return changed


@numba.njit(cache=True)
def _break_blocks(img):
    h, w = img.shape
    changed = 0
    for y in range(h - 1):
        for x in range(w - 1):
            if img[y, x] and img[y, x + 1] and img[y + 1, x] and img[y + 1, x + 1]:
                img[y, x] = 0
                changed += 1
    return changed


def _as_work(e) -> np.ndarray:
    arr = np.asarray(e)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D edge image, got shape {arr.shape}")
    return (arr != 0).astype(np.uint8)


def _thin_inplace(work: np.ndarray, force: bool = True) -> None:
    limit = work.size + 1
    for _ in range(limit):
        while _thin_pass(work, _RING_DY, _RING_DX, _RING_COMPONENTS):
            pass
        # a solid block whose four pixels are all cut points cannot be thinned
        # without splitting a component; break it anyway
        if not force or not _break_blocks(work):
            return


def thin_edges(e) -> np.ndarray:
    """Remove corner pixels of four-connected paths until lines are one pixel wide.

    A pixel is removed when two orthogonal 4-neighbours are set and its set
    8-neighbours stay 8-connected without it.  Passes repeat to a fixpoint.
    """
    work = _as_work(e)
    _thin_inplace(work)
    return work.astype(bool)


def neighbor_count(e) -> np.ndarray:
    """Number of set 8-neighbours of every pixel."""
    a = np.pad(np.asarray(e) != 0, 1).astype(np.int16)
    h, w = a.shape[0] - 2, a.shape[1] - 2
    total = np.zeros((h, w), dtype=np.int16)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                total += a[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return total


def delete_junctions(e) -> np.ndarray:
    """Delete every edge pixel with more than two set 8-neighbours.

    Counts are taken on the input image, so the result does not depend on
    scan order and no surviving pixel has more than two neighbours.
    """
    arr = np.asarray(e) != 0
    return arr & (neighbor_count(arr) <= 2)


def _packed(p: PatternSet) -> tuple:
    return p.cells, p.ncells, p.by_ring_start, p.by_ring, _RING_DY, _RING_DX


def _apply(e, patterns: PatternSet) -> np.ndarray:
    work = _as_work(e)
    _apply_patterns(work, *_packed(patterns))
    return work.astype(bool)


def straighten_edges(e) -> np.ndarray:
    """Rewrite one-pixel bumps and diagonal detours into straight runs (one pass)."""
    return _apply(e, STRAIGHTENING)


def break_orthogonals(e) -> np.ndarray:
    """Delete pixels joining two runs that meet at a right angle (one pass)."""
    return _apply(e, ORTHOGONAL_BREAKS)


def filter_edges_morphologic(e, stages: dict | None = None) -> np.ndarray:
    """Thin, delete junctions, straighten, break orthogonal connections.

    When ``stages`` is a dict, the intermediate image after each step is
    stored in it under ``thinned``, ``junctions``, ``straightened`` and
    ``orthogonal``.
    """
    work = _as_work(e)
    _thin_inplace(work)
    if stages is not None:
        stages["thinned"] = work.astype(bool)
    work = delete_junctions(work).astype(np.uint8)
    if stages is not None:
        stages["junctions"] = work.astype(bool)
    _apply_patterns(work, *_packed(STRAIGHTENING))
    if stages is not None:
        stages["straightened"] = work.astype(bool)
    _apply_patterns(work, *_packed(ORTHOGONAL_BREAKS))
    out = work.astype(bool)
    if stages is not None:
        stages["orthogonal"] = out
    return out


def _split_point(pts: np.ndarray, start: int, angle_slack: float, dist_slack: float, min_chord: float) -> int:
    """Index at which the next run begins when the run from ``start`` breaks.

    Returns ``len(pts)`` when the remainder is consistent with one arc.
    """
    n = len(pts)
    sx, sy = float(pts[start, 0]), float(pts[start, 1])
    # the reference segment spans at least min_chord so one-pixel steps
    # do not fix the tangent to one of eight directions
    j = start + 1
    while j < n - 1 and math.hypot(float(pts[j, 0]) - sx, float(pts[j, 1]) - sy) < min_chord:
        j += 1
    tx = float(pts[j, 0]) - sx
    ty = float(pts[j, 1]) - sy
    norm = math.hypot(tx, ty)
    if norm == 0:
        # no direction to measure against
        return n
    tx, ty = tx / norm, ty / norm
    ox, oy = -ty, tx
    side = 0.0
    best_angle, at_angle, best_angle_dist = math.inf, start, 1.0
    best_dist, at_dist = math.inf, start
    for i in range(j + 1, n):
        vx = float(pts[i, 0]) - sx
        vy = float(pts[i, 1]) - sy
        along = vx * tx + vy * ty
        across = vx * ox + vy * oy
        if side == 0.0:
            # the bending side is fixed, once, by the first clear lateral offset;
            # the orthogonal is turned over when the line bends away from it
            if abs(across) <= angle_slack or across == 0.0:
                continue
            side = 1.0 if across > 0 else -1.0
        across *= side
        dist = math.hypot(vx, vy)
        # signed angle between orthogonal and chord: +90 -> 0 -> -90 along an ellipse
        angle = math.degrees(math.atan2(along, across))
        # both this point and the running minimum carry rounding error
        slack = math.degrees(math.atan2(angle_slack, dist) + math.atan2(angle_slack, best_angle_dist))
        # a violation cuts at the extremum where the trend turned
        if angle > best_angle + slack:
            return at_angle
        if angle < 0:
            if dist > best_dist + dist_slack:
                return at_dist
            if dist < best_dist:
                best_dist, at_dist = dist, i
        if angle < best_angle:
            best_angle, at_angle, best_angle_dist = angle, i, dist
    return n


def break_line_algorithmic(
    line, angle_slack: float = 1.0, dist_slack: float = 2.0, min_chord: float = 3.0
) -> list:
    """Split an ordered polyline where it cannot belong to a single ellipse.

    From the run's start point the chord to each following point is compared
    with the orthogonal of the first segment, which spans at least
    ``min_chord`` pixels.  Along an ellipse the angle falls from 90 degrees
    through 0 toward -90 and, once past 0, the chord length must shrink.  On
    a violation the next run starts at the point where the violated trend
    turned.  Slack terms absorb pixel quantisation: the angle may rise by
    ``atan(angle_slack / chord)`` for the current point plus the same term
    for the running minimum, and the chord may grow by ``dist_slack``.  With
    the slacks and ``min_chord`` all zero the conditions are applied exactly.

    ``line`` is a :class:`~elsepupil.lines.Polyline` or an ``(N, 2)`` array of
    ``(x, y)`` points; the result has the same type.  Concatenating the pieces
    gives back the input sequence.
    """
    from .lines import Polyline

    is_polyline = isinstance(line, Polyline)
    pts = np.asarray(line.points if is_polyline else line)
    n = len(pts)
    if n <= 2:
        pieces = [pts]
    else:
        cuts = [0]
        start = 0
        while n - start > 2:
            cut = _split_point(pts, start, angle_slack, dist_slack, min_chord)
            if cut >= n:
                break
            cuts.append(cut)
            start = cut
        cuts.append(n)
        bounds = list(zip(cuts[:-1], cuts[1:]))
        # a one-point tail joins the previous piece
        if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
            (a, _), (_, d) = bounds[-2], bounds[-1]
            bounds[-2:] = [(a, d)]
        pieces = [pts[a:b] for a, b in bounds]
    if not is_polyline:
        return [p.copy() for p in pieces]
    if len(pieces) == 1:
        return [line]
    return [Polyline(p.copy(), closed=False) for p in pieces]
