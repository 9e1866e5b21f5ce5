"""Gray images, border regions and Canny edge extraction.

Images are plain 2-D ``numpy.uint8`` arrays indexed ``img[y, x]`` with the
origin at the top-left corner, x growing rightward and y downward.  Edge
images are boolean arrays of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

__all__ = [
    "ImageFormatError",
    "Region",
    "as_gray",
    "canny",
    "load_gray_image",
    "normalize",
    "processing_region",
    "round_half_up",
    "save_pgm",
]

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """Raised when a raster file cannot be decoded as 8-bit grayscale."""


def round_half_up(values):
    """Round to the nearest integer, halves going up (2.5 -> 3, -2.5 -> -2)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def as_gray(img) -> np.ndarray:
    """Validate ``img`` as a non-empty 2-D 8-bit image and return it as uint8."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("intensities must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


@dataclass(frozen=True)
class Region:
    """Inclusive pixel rectangle ``[x_min, x_max] x [y_min, y_max]``."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max or self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"invalid region {self}")

    @classmethod
    def full(cls, shape) -> Region:
        h, w = shape
        return cls(0, 0, w - 1, h - 1)

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def slices(self) -> tuple[slice, slice]:
        """Row/column slices selecting the region from an image array."""
        return slice(self.y_min, self.y_max + 1), slice(self.x_min, self.x_max + 1)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def fits(self, shape) -> bool:
        h, w = shape
        return self.x_max < w and self.y_max < h

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.slices] = True
        return m


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PGM header")
    return data[start:pos], pos


def _decode_pgm(data: bytes) -> np.ndarray:
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"bad PGM header field {tok!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PGM (maxval 255) is supported, got maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    payload = data[pos : pos + width * height]
    if len(payload) != width * height:
        raise ImageFormatError(
            f"truncated PGM payload: expected {width * height} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def _decode_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on the optional extra
        raise ImageFormatError("PNG input needs Pillow (install the 'png' extra)") from None
    with Image.open(path) as im:
        if im.mode != "L":
            raise ImageFormatError(f"PNG must be 8-bit grayscale, got mode {im.mode!r}")
        return np.array(im, dtype=np.uint8)


def load_gray_image(path) -> np.ndarray:
    """Load an 8-bit grayscale raster (binary PGM, or PNG when Pillow is present)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"P5":
        return _decode_pgm(data)
    if data[:8] == _PNG_MAGIC:
        return _decode_png(path)
    raise ImageFormatError(f"{path}: unsupported raster format (expected binary PGM or PNG)")


def save_pgm(path, img) -> None:
    """Write ``img`` as a binary PGM (P5, maxval 255)."""
    arr = as_gray(img)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def normalize(img) -> np.ndarray:
    """Linear min-max stretch onto [0, 255]; constant images come back unchanged."""
    arr = as_gray(img)
    lo = int(arr.min())
    hi = int(arr.max())
    if lo == hi:
        return arr.copy()
    # integer form of round((v - lo) * 255 / (hi - lo)) with halves rounded up
    span = hi - lo
    num = (np.arange(256, dtype=np.int64) - lo) * 255
    lut = np.clip((2 * num + span) // (2 * span), 0, 255).astype(np.uint8)
    return lut[arr]


def processing_region(shape, border_fraction: float = 0.10) -> Region:
    """Region left after excluding ``border_fraction`` of each side of an image.

    ``shape`` is ``(height, width)``; an image array may be passed instead.
    """
    if not 0.0 <= border_fraction < 0.5:
        raise ValueError(f"border_fraction must lie in [0, 0.5), got {border_fraction}")
    if hasattr(shape, "shape"):
        shape = shape.shape
    h, w = shape
    mx = math.floor(w * border_fraction)
    my = math.floor(h * border_fraction)
    return Region(mx, my, w - 1 - mx, h - 1 - my)


def gaussian_weights(sigma: float) -> np.ndarray:
    """Integer 1-D Gaussian taps; sigma=1.4 gives a 5-tap (5x5 separable) kernel."""
    radius = max(1, int(round_half_up(1.5 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = round_half_up(256.0 * np.exp(-(x * x) / (2.0 * sigma * sigma)))
    return taps.astype(np.int64)


def gradients(img, sigma: float = 1.4) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradients of the Gaussian-smoothed image.

    Smoothing uses integer taps and no final division, so every value is an
    exact integer: gradients are unchanged when a constant is added to ``img``.
    """
    taps = gaussian_weights(sigma)
    smooth = np.asarray(img, dtype=np.int64)
    smooth = ndimage.correlate1d(smooth, taps, axis=0, mode="nearest")
    smooth = ndimage.correlate1d(smooth, taps, axis=1, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest").astype(np.float64)
    gy = ndimage.sobel(smooth, axis=0, mode="nearest").astype(np.float64)
    scale = float(taps.sum()) ** 2
    return gx / scale, gy / scale


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    pad = np.pad(mag, 1, mode="constant")

    def shifted(dy, dx):
        return pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    # gradient direction folded into [0, 180) and binned to 0/45/90/135 degrees
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((angle + 22.5) / 45.0).astype(np.int64)) % 4
    keep = np.zeros(mag.shape, dtype=bool)
    # (dy, dx) points along the gradient; ties kept on the positive side only
    for s, (dy, dx) in enumerate(((0, 1), (1, 1), (1, 0), (1, -1))):
        sel = sector == s
        fwd = shifted(dy, dx)
        back = shifted(-dy, -dx)
        keep |= sel & (mag > back) & (mag >= fwd)
    return keep & (mag > 0)


@numba.njit(cache=True)
def _smooth_sobel(img, taps, gx, gy):
    h, w = img.shape
    nt = len(taps)
    r = nt // 2
    tmp = np.zeros((h, w), dtype=gx.dtype)
    for y in range(h):
        for k in range(nt):
            yy = min(max(y + k - r, 0), h - 1)
            t = taps[k]
            for x in range(w):
                tmp[y, x] += t * img[yy, x]
    sm = np.empty((h, w), dtype=gx.dtype)
    for y in range(h):
        for x in range(w):
            if x < r or x >= w - r:
                acc = 0
                for k in range(nt):
                    acc += taps[k] * tmp[y, min(max(x + k - r, 0), w - 1)]
                sm[y, x] = acc
            else:
                acc = 0
                for k in range(nt):
                    acc += taps[k] * tmp[y, x + k - r]
                sm[y, x] = acc
    for y in range(h):
        yu = max(y - 1, 0)
        yd = min(y + 1, h - 1)
        for x in range(w):
            xl = max(x - 1, 0)
            xr = min(x + 1, w - 1)
            gx[y, x] = (sm[yu, xr] - sm[yu, xl]) + 2 * (sm[y, xr] - sm[y, xl]) + (sm[yd, xr] - sm[yd, xl])
            gy[y, x] = (sm[yd, xl] - sm[yu, xl]) + 2 * (sm[yd, x] - sm[yu, x]) + (sm[yd, xr] - sm[yu, xr])


@numba.njit(cache=True)
def _magnitude(gx, gy, scale, y0, y1, x0, x1):
    h, w = gx.shape
    mag = np.empty((h, w), dtype=np.float64)
    n = 0
    for y in range(h):
        for x in range(w):
            fx = gx[y, x] / scale
            fy = gy[y, x] / scale
            m = math.sqrt(fx * fx + fy * fy)
            mag[y, x] = m
            if m > 0 and y0 <= y <= y1 and x0 <= x <= x1:
                n += 1
    inside = np.empty(n, dtype=np.float64)
    k = 0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            if mag[y, x] > 0:
                inside[k] = mag[y, x]
                k += 1
    return mag, inside


_TAN_22_5 = math.tan(math.pi / 8.0)
_TAN_67_5 = math.tan(3.0 * math.pi / 8.0)


@numba.njit(cache=True)
def _sector(gx, gy):
    # direction folded into [0, 180) degrees, binned at 22.5 + 45 k
    ax = abs(gx)
    ay = abs(gy)
    diag = 1 if (gx > 0) == (gy > 0) else 3
    return 0 if ay < _TAN_22_5 * ax else (2 if ay >= _TAN_67_5 * ax else diag)


@numba.njit(cache=True)
def _nms_hysteresis(mag, gx, gy, low, high, y0, y1, x0, x1):
    h, w = mag.shape
    # 0 clear, 1 weak, 2 accepted
    state = np.zeros((h, w), dtype=np.uint8)
    stack = np.empty(((y1 - y0 + 1) * (x1 - x0 + 1), 2), dtype=np.int64)
    top = 0
    sdy = np.array((0, 1, 1, 1))
    sdx = np.array((1, 1, 0, -1))
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            m = mag[y, x]
            if m <= 0 or m < low:
                continue
            s = _sector(gx[y, x], gy[y, x])
            yf, xf = y + sdy[s], x + sdx[s]
            yb, xb = y - sdy[s], x - sdx[s]
            fwd = mag[yf, xf] if 0 <= yf < h and 0 <= xf < w else 0.0
            back = mag[yb, xb] if 0 <= yb < h and 0 <= xb < w else 0.0
            state[y, x] = (m > back) & (m >= fwd)
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            if state[y, x] != 1 or mag[y, x] < high:
                continue
            state[y, x] = 2
            stack[top, 0] = y
            stack[top, 1] = x
            top += 1
            while top > 0:
                top -= 1
                cy = stack[top, 0]
                cx = stack[top, 1]
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        ny, nx = cy + dy, cx + dx
                        if y0 <= ny <= y1 and x0 <= nx <= x1 and state[ny, nx] == 1:
                            state[ny, nx] = 2
                            stack[top, 0] = ny
                            stack[top, 1] = nx
                            top += 1
    return state == 2


def _linear_percentile(values: np.ndarray, q: float) -> float:
    # numpy's default (linear) percentile from a two-element partition
    n = values.size
    pos = (n - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    part = np.partition(values, (lo, hi))
    frac = pos - lo
    return float(part[lo] + (part[hi] - part[lo]) * frac)


def canny(
    img,
    region: Region | None = None,
    sigma: float = 1.4,
    percentile: float = 70.0,
    low_ratio: float = 0.4,
) -> np.ndarray:
    """Canny edge map restricted to ``region``.

    The high hysteresis threshold is the ``percentile`` of the non-zero gradient
    magnitudes inside the region and the low threshold is ``low_ratio`` times it.
    Gradients are those of :func:`gradients`; suppression bins the direction
    into four sectors and keeps ties on the positive side only.
    """
    arr = as_gray(img)
    if region is None:
        region = Region.full(arr.shape)
    if not region.fits(arr.shape):
        raise ValueError(f"region {region} does not fit image of shape {arr.shape}")
    taps = gaussian_weights(sigma)
    # only the region plus a margin covering the smoothing, Sobel and
    # suppression footprints is computed; clamping at true image borders is kept
    m = len(taps) // 2 + 2
    cy0, cx0 = max(region.y_min - m, 0), max(region.x_min - m, 0)
    cy1, cx1 = min(region.y_max + m, arr.shape[0] - 1), min(region.x_max + m, arr.shape[1] - 1)
    crop = np.ascontiguousarray(arr[cy0 : cy1 + 1, cx0 : cx1 + 1])
    scale = float(taps.sum()) ** 2
    # int32 is exact while the largest possible |gradient| fits
    dtype = np.int32 if 4 * 255 * scale < 2**31 else np.int64
    gx = np.empty(crop.shape, dtype=dtype)
    gy = np.empty(crop.shape, dtype=dtype)
    _smooth_sobel(crop, taps.astype(dtype), gx, gy)
    box = (region.y_min - cy0, region.y_max - cy0, region.x_min - cx0, region.x_max - cx0)
    mag, inside = _magnitude(gx, gy, scale, *box)
    out = np.zeros(arr.shape, dtype=bool)
    if inside.size == 0:
        return out
    high = _linear_percentile(inside, percentile)
    out[cy0 : cy1 + 1, cx0 : cx1 + 1] = _nms_hysteresis(mag, gx, gy, low_ratio * high, high, *box)
    return out


def canny_reference(
    img,
    region: Region | None = None,
    sigma: float = 1.4,
    percentile: float = 70.0,
    low_ratio: float = 0.4,
) -> np.ndarray:
    """Array formulation of :func:`canny`, slower but easy to audit."""
    arr = as_gray(img)
    if region is None:
        region = Region.full(arr.shape)
    gx, gy = gradients(arr, sigma)
    mag = np.sqrt(gx * gx + gy * gy)
    inside = region.mask(arr.shape)
    nonzero = mag[inside]
    nonzero = nonzero[nonzero > 0]
    if nonzero.size == 0:
        return np.zeros(arr.shape, dtype=bool)
    high = float(np.percentile(nonzero, percentile))
    low = low_ratio * high
    thin = _non_max_suppression(mag, gx, gy) & inside
    weak = thin & (mag >= low)
    strong = thin & (mag >= high)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(arr.shape, dtype=bool)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[labels[strong]] = True
    seeded[0] = False
    return seeded[labels]
