"""Ellipse fitting, plausibility checks and rating of pupil candidates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lines import Polyline
from .params import ElseParams
from .raster import round_half_up

__all__ = [
    "CandidateRecord",
    "CandidateScore",
    "EllipseFitError",
    "EllipseParams",
    "check_area",
    "check_radii_ratio",
    "ellipse_eval",
    "fit_ellipse_lsq",
    "inner_gray_value",
    "rate_candidates",
    "select_best_ellipse",
    "surface_difference_validity",
]


class EllipseFitError(ValueError):
    """No ellipse can be fitted (too few points or a degenerate configuration)."""


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse in image coordinates.

    ``angle`` is the direction of the major axis in radians within ``[0, pi)``,
    measured from +x toward +y (clockwise on screen, since y points down).
    """

    center_x: float
    center_y: float
    radius_major: float
    radius_minor: float
    angle: float

    def __post_init__(self):
        if not (self.radius_major >= self.radius_minor > 0):
            raise ValueError(f"need radius_major >= radius_minor > 0, got {self}")

    @property
    def center(self) -> tuple[float, float]:
        return self.center_x, self.center_y

    @property
    def area(self) -> float:
        return math.pi * self.radius_major * self.radius_minor

    def bounding_half_extents(self) -> tuple[float, float]:
        """Half width and half height of the axis-aligned bounding box."""
        a, b = self.radius_major, self.radius_minor
        c, s = math.cos(self.angle), math.sin(self.angle)
        return math.sqrt((a * c) ** 2 + (b * s) ** 2), math.sqrt((a * s) ** 2 + (b * c) ** 2)

    def boundary(self, n: int = 64) -> np.ndarray:
        """``n`` points on the ellipse as an ``(n, 2)`` array of ``(x, y)``."""
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = self.radius_major * np.cos(t)
        v = self.radius_minor * np.sin(t)
        return np.column_stack((self.center_x + c * u - s * v, self.center_y + s * u + c * v))


def _conic_to_params(coef: np.ndarray) -> tuple[float, float, float, float, float]:
    a, b, c, d, e, f = coef
    det = 4.0 * a * c - b * b
    if det <= 0:
        raise EllipseFitError("conic is not an ellipse")
    x0 = (b * e - 2.0 * c * d) / det
    y0 = (b * d - 2.0 * a * e) / det
    f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f
    evals, evecs = np.linalg.eigh(np.array([[a, b / 2.0], [b / 2.0, c]]))
    r2 = -f0 / evals
    if not np.all(np.isfinite(r2)) or np.any(r2 <= 0):
        raise EllipseFitError("conic has no real ellipse")
    radii = np.sqrt(r2)
    k = int(np.argmax(radii))
    vx, vy = evecs[:, k]
    angle = math.atan2(vy, vx) % math.pi
    if angle >= math.pi:
        angle = 0.0
    return float(x0), float(y0), float(radii[k]), float(radii[1 - k]), angle


def fit_ellipse_lsq(points) -> EllipseParams:
    """Direct least-squares ellipse fit of an ``(N, 2)`` array of ``(x, y)`` points.

    Uses the ellipse-specific constrained conic fit in its numerically stable
    block form, on points centred and scaled to unit RMS radius.
    """
    pts = np.asarray(points.points if isinstance(points, Polyline) else points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (N, 2) array")
    if len(pts) < 5:
        raise EllipseFitError(f"need at least 5 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    q = pts - mean
    scale = math.sqrt((q * q).sum() / len(q))
    if scale == 0:
        raise EllipseFitError("all points coincide")
    q = q / scale
    x, y = q[:, 0], q[:, 1]
    d1 = np.column_stack((x * x, x * y, y * y))
    d2 = np.column_stack((x, y, np.ones_like(x)))
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise EllipseFitError("degenerate point configuration") from None
    if not np.all(np.isfinite(t)) or np.abs(t).max() > 1e8:
        raise EllipseFitError("degenerate point configuration")
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.flatnonzero((cond > 0) & (np.abs(np.imag(evals)) < 1e-9))
    if ok.size == 0:
        raise EllipseFitError("no ellipse-constrained solution")
    a1 = evecs[:, ok[0]]
    coef = np.concatenate((a1, t @ a1))
    cx, cy, ra, rb, angle = _conic_to_params(coef)
    return EllipseParams(
        center_x=float(cx * scale + mean[0]),
        center_y=float(cy * scale + mean[1]),
        radius_major=float(ra * scale),
        radius_minor=float(rb * scale),
        angle=angle,
    )


def check_radii_ratio(el: EllipseParams, radi_ratio: float = 3.0) -> bool:
    return el.radius_major / el.radius_minor <= radi_ratio


def check_area(el: EllipseParams, img_w: int, img_h: int, min_area: float = 0.005, max_area: float = 0.10) -> bool:
    """Ellipse area must lie within the given fractions of the image area."""
    total = img_w * img_h
    if total <= 0:
        return False
    return min_area * total <= el.area <= max_area * total


def _box_sum(img: np.ndarray, cx: float, cy: float, hw: float, hh: float) -> tuple[int, int, tuple]:
    h, w = img.shape
    x0 = max(0, math.ceil(cx - hw))
    x1 = min(w - 1, math.floor(cx + hw))
    y0 = max(0, math.ceil(cy - hh))
    y1 = min(h - 1, math.floor(cy + hh))
    if x0 > x1 or y0 > y1:
        return 0, 0, (0, -1, 0, -1)
    block = img[y0 : y1 + 1, x0 : x1 + 1]
    return int(block.sum(dtype=np.int64)), block.size, (x0, x1, y0, y1)


def surface_difference_validity(
    img, center, half_w: float, half_h: float, validity_threshold: float = 10.0
) -> tuple[bool, float]:
    """Compare a dark inner box with the ring around the candidate's bounding box.

    ``half_w``/``half_h`` are half extents of the enclosing axis-aligned box.
    The inner box has half that size; the ring lies between the box itself and
    the box scaled by 3/2.  A pixel belongs to a box when its centre lies
    within it; boxes are clipped to the image.  Returns ``(diff > threshold,
    diff)`` with ``diff = mean(ring) - mean(inner)``; an empty inner box or
    ring gives ``(False, 0.0)``.
    """
    arr = np.asarray(img)
    cx, cy = float(center[0]), float(center[1])
    s_in, n_in, _ = _box_sum(arr, cx, cy, half_w / 2.0, half_h / 2.0)
    s_mid, n_mid, _ = _box_sum(arr, cx, cy, half_w, half_h)
    s_out, n_out, _ = _box_sum(arr, cx, cy, 1.5 * half_w, 1.5 * half_h)
    n_ring = n_out - n_mid
    if n_in == 0 or n_ring == 0:
        return False, 0.0
    diff = (s_out - s_mid) / n_ring - s_in / n_in
    return bool(diff > validity_threshold), float(diff)


def inner_gray_value(img, line, el: EllipseParams, factors=None) -> tuple[float, int]:
    """Mean intensity of pixels reached by pulling line points toward the centre.

    Each line point's vector to the ellipse centre is scaled by every factor
    (default 0.95 down to 0.80 in steps of 0.01).  Sample positions are
    rounded half-up; samples outside the image are dropped and every pixel
    counts once.  Returns ``(gray_value, count)``; ``(nan, 0)`` when no sample
    lands inside the image.
    """
    arr = np.asarray(img)
    if factors is None:
        factors = ElseParams().shrink_factors()
    pts = np.asarray(line.points if isinstance(line, Polyline) else line, dtype=np.float64)
    f = np.asarray(factors, dtype=np.float64)[:, None, None]
    c = np.array([el.center_x, el.center_y])
    samples = round_half_up(c + f * (pts[None, :, :] - c)).reshape(-1, 2).astype(np.int64)
    h, w = arr.shape
    ok = (samples[:, 0] >= 0) & (samples[:, 0] < w) & (samples[:, 1] >= 0) & (samples[:, 1] < h)
    idx = np.unique(samples[ok, 1] * w + samples[ok, 0])
    if idx.size == 0:
        return math.nan, 0
    return float(arr.ravel()[idx].astype(np.int64).sum() / idx.size), int(idx.size)


def ellipse_eval(gray_value: float, el: EllipseParams) -> float:
    """Rating of a candidate: lower is darker and rounder."""
    return gray_value * (1.0 + abs(el.radius_major - el.radius_minor))


@dataclass(frozen=True)
class CandidateScore:
    ellipse: EllipseParams
    gray_value: float
    eval: float
    support: int
    line_index: int = -1


@dataclass
class CandidateRecord:
    """Outcome of every check for one line; ``verdict`` is ``accepted`` or the failed stage."""

    line_index: int
    support: int
    ellipse: EllipseParams | None = None
    verdict: str = "accepted"
    surface_diff: float = math.nan
    gray_value: float = math.nan
    eval: float = math.nan
    checks: dict = field(default_factory=dict)

    def score(self) -> CandidateScore:
        return CandidateScore(self.ellipse, self.gray_value, self.eval, self.support, self.line_index)


def rate_candidates(img, lines, params: ElseParams | None = None) -> list[CandidateRecord]:
    """Run fit, ratio, area and validity checks and the rating on every line."""
    params = params or ElseParams()
    arr = np.asarray(img)
    h, w = arr.shape
    factors = params.shrink_factors()
    records = []
    for i, line in enumerate(lines):
        rec = CandidateRecord(line_index=i, support=len(line))
        records.append(rec)
        try:
            el = fit_ellipse_lsq(line)
        except EllipseFitError:
            rec.verdict = "fit"
            continue
        rec.ellipse = el
        rec.checks["ratio"] = check_radii_ratio(el, params.radi_ratio)
        if not rec.checks["ratio"]:
            rec.verdict = "ratio"
            continue
        rec.checks["area"] = check_area(el, w, h, params.min_area, params.max_area)
        if not rec.checks["area"]:
            rec.verdict = "area"
            continue
        if not (0 <= el.center_x <= w - 1 and 0 <= el.center_y <= h - 1):
            rec.verdict = "center"
            continue
        hw, hh = el.bounding_half_extents()
        valid, diff = surface_difference_validity(arr, el.center, hw, hh, params.validity_threshold)
        rec.surface_diff = diff
        rec.checks["validity"] = valid
        if not valid:
            rec.verdict = "validity"
            continue
        gray, count = inner_gray_value(arr, line, el, factors)
        if count == 0:
            rec.verdict = "rating"
            continue
        rec.gray_value = gray
        rec.eval = ellipse_eval(gray, el)
    return records


def best_of(records) -> CandidateScore | None:
    """Lowest rating wins; equal ratings go to the line with more points, then the earlier line."""
    best = None
    for rec in records:
        if rec.verdict != "accepted":
            continue
        if best is None or rec.eval < best.eval or (rec.eval == best.eval and rec.support > best.support):
            best = rec
    return best.score() if best is not None else None


def select_best_ellipse(img, lines, params: ElseParams | None = None) -> CandidateScore | None:
    """Pick the pupil ellipse among ``lines``; ``None`` when no line survives the checks."""
    return best_of(rate_candidates(img, lines, params))
