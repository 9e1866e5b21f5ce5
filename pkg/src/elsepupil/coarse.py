"""Coarse pupil positioning used when no ellipse is accepted.

The image is shrunk with a dark-weighted low pass, two circular filters are
correlated with it, the product of their responses picks a cell, and the
cell's position is refined and validated on the full-scale image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .ellipse import surface_difference_validity
from .raster import Region, as_gray

__all__ = [
    "CircularKernels",
    "build_kernels",
    "convolve",
    "downscale_mum",
    "downscaled_shape",
    "optimize_position",
    "radius_filter_for",
    "select_coarse_position",
    "upscale_position",
    "validate_position",
    "validation_half_extent",
]


def radius_filter_for(img_w: int, img_h: int) -> int:
    """Filter radius: the larger image dimension divided by 100, rounded up."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError("image dimensions must be positive")
    return -(-max(img_w, img_h) // 100)


def downscaled_shape(shape, radius_scale: int) -> tuple[int, int]:
    """``(height, width)`` of the MUM-downscaled image."""
    h, w = shape
    step = radius_scale + 1
    return (h - 1 - radius_scale) // step + 1, (w - 1 - radius_scale) // step + 1


@numba.njit(cache=True)
def _mum(img, radius_scale, out):
    h, w = img.shape
    oh, ow = out.shape
    step = radius_scale + 1
    hist = np.zeros(256, dtype=np.int64)
    for j in range(oh):
        cy = j * step + radius_scale
        y0 = max(0, cy - radius_scale)
        y1 = min(h - 1, cy + radius_scale)
        for i in range(ow):
            cx = i * step + radius_scale
            x0 = max(0, cx - radius_scale)
            x1 = min(w - 1, cx + radius_scale)
            hist[:] = 0
            total = 0
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    v = img[y, x]
                    hist[v] += 1
                    total += v
            n = (y1 - y0 + 1) * (x1 - x0 + 1)
            # intensities v with v <= total / n, in exact integer arithmetic
            low_sum = 0
            low_n = 0
            for v in range(256):
                if v * n > total:
                    break
                low_sum += hist[v] * v
                low_n += hist[v]
            out[j, i] = (2 * low_sum + low_n) // (2 * low_n)
    return out


def downscale_mum(img, radius_scale: int = 5) -> np.ndarray:
    """Shrink by ``radius_scale + 1`` using the mean of the under-mean intensities.

    Output pixel ``(i, j)`` summarises the ``(2 r + 1)``-square window centred at
    full-scale ``(i (r + 1) + r, j (r + 1) + r)``, clipped at the borders.  Its
    value is the mean of all window intensities not above the window mean,
    rounded half-up.
    """
    arr = as_gray(img)
    if radius_scale < 1:
        raise ValueError("radius_scale must be >= 1")
    h, w = arr.shape
    size = 2 * radius_scale + 1
    if h < size or w < size:
        raise ValueError(f"image {w}x{h} is smaller than one {size}x{size} window")
    out = np.zeros(downscaled_shape(arr.shape, radius_scale), dtype=np.uint8)
    return _mum(np.ascontiguousarray(arr), radius_scale, out)


@dataclass(frozen=True)
class CircularKernels:
    """Mean and surface-difference stencils of side ``2 * radius_filter + 1``.

    ``mean_kernel`` is a disk of radius ``radius_filter`` summing to 1.  In
    ``surface_kernel`` the inner disk of radius ``radius_filter / 2`` sums to -1
    and the rest of the square sums to +1.
    """

    mean_kernel: np.ndarray
    surface_kernel: np.ndarray
    radius_filter: int

    @property
    def inner_mask(self) -> np.ndarray:
        return self.surface_kernel < 0


def build_kernels(radius_filter: int) -> CircularKernels:
    if radius_filter < 1:
        raise ValueError("radius_filter must be >= 1")
    r = radius_filter
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    dist = np.hypot(xx, yy)
    disk = dist <= r
    inner = dist <= r / 2.0
    mean_kernel = disk / disk.sum()
    surface = np.where(inner, -1.0 / inner.sum(), 1.0 / (~inner).sum())
    return CircularKernels(mean_kernel.astype(np.float64), surface, r)


def convolve(img, kernel) -> np.ndarray:
    """Same-size correlation with clamp-to-edge borders."""
    arr = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if k.shape[0] > arr.shape[0] or k.shape[1] > arr.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {arr.shape}")
    return ndimage.correlate(arr, k, mode="nearest")


def coarse_responses(small, kernels: CircularKernels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Surface response, inverted mean response and their product."""
    surf = convolve(small, kernels.surface_kernel)
    inv_mean = 255.0 - convolve(small, kernels.mean_kernel)
    return surf, inv_mean, surf * inv_mean


def select_coarse_position(small, kernels: CircularKernels, mask=None) -> tuple[tuple[int, int], float]:
    """Cell with the largest weighted response as ``((x, y), response)``.

    Ties go to the first cell in row-major order.  ``mask`` restricts the
    search to the cells where it is true.
    """
    _, _, resp = coarse_responses(small, kernels)
    if mask is not None:
        resp = np.where(mask, resp, -np.inf)
    k = int(np.argmax(resp))
    y, x = divmod(k, resp.shape[1])
    return (x, y), float(resp[y, x])


def upscale_position(p, radius_scale: int = 5, shape=None) -> tuple[int, int]:
    """Full-scale centre of the window behind downscaled cell ``p``, clipped to ``shape``."""
    step = radius_scale + 1
    x = int(p[0]) * step + radius_scale
    y = int(p[1]) * step + radius_scale
    if shape is not None:
        h, w = shape
        x = min(max(x, 0), w - 1)
        y = min(max(y, 0), h - 1)
    return x, y


def _clip_box(shape, cx: int, cy: int, half: int) -> tuple[slice, slice, int, int]:
    h, w = shape
    x0, x1 = max(0, cx - half), min(w - 1, cx + half)
    y0, y1 = max(0, cy - half), min(h - 1, cy + half)
    return slice(y0, y1 + 1), slice(x0, x1 + 1), x0, y0


def optimize_position(img, coarse, radius_filter: int, size_neighbourhood: int = 2) -> tuple[float, float]:
    """Centre of mass of the dark pixels around a coarse full-scale position.

    The threshold is the coarse pixel's intensity plus the absolute difference
    between it and the mean of its ``size_neighbourhood`` box.  Pixels at or
    below the threshold inside the square of half side ``radius_filter ** 2``
    are averaged; with none selected the coarse position is returned.
    """
    arr = as_gray(img)
    cx, cy = int(coarse[0]), int(coarse[1])
    center_val = float(arr[cy, cx])
    ys, xs, _, _ = _clip_box(arr.shape, cx, cy, size_neighbourhood)
    neigh_mean = float(arr[ys, xs].mean())
    threshold = center_val + abs(neigh_mean - center_val)
    ys, xs, x0, y0 = _clip_box(arr.shape, cx, cy, radius_filter * radius_filter)
    sel = arr[ys, xs] <= threshold
    if not sel.any():
        return float(cx), float(cy)
    yy, xx = np.nonzero(sel)
    return float(xx.mean() + x0), float(yy.mean() + y0)


def validation_half_extent(radius_filter: int, literal: bool = True) -> float:
    """Half of the box diameter used to validate a coarse position.

    With ``literal`` the diameter is ``radius_filter ** 2 * 2 + 1``, otherwise
    ``radius_filter * 2 + 1``.
    """
    rf = radius_filter * radius_filter if literal else radius_filter
    return (rf * 2 + 1) / 2.0


def validate_position(
    img, p, radius_filter: int, validity_threshold: float = 10.0, literal: bool = True
) -> bool:
    """Surface-difference check of a coarse position with a square candidate box."""
    half = validation_half_extent(radius_filter, literal)
    valid, _ = surface_difference_validity(img, p, half, half, validity_threshold)
    return valid


def region_cell_mask(small_shape, radius_scale: int, region: Region) -> np.ndarray:
    """Downscaled cells whose full-scale window centre lies inside ``region``."""
    oh, ow = small_shape
    step = radius_scale + 1
    cx = np.arange(ow) * step + radius_scale
    cy = np.arange(oh) * step + radius_scale
    mx = (cx >= region.x_min) & (cx <= region.x_max)
    my = (cy >= region.y_min) & (cy <= region.y_max)
    return my[:, None] & mx[None, :]
