"""Deterministic synthetic eye images with known pupil centres.

All randomness comes from integer draws of a seeded PCG64 generator, so a
seed reproduces the same scene parameters and noise on every platform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import round_half_up, save_pgm

__all__ = ["CLASSES", "SceneSpec", "generate_suite", "render", "save_suite"]

CLASSES = ("clean", "blurred", "reflections", "dark-surround", "closed-eye")


@dataclass(frozen=True)
class SceneSpec:
    """Layered eye scene: skin, eye opening (sclera), iris disk, pupil ellipse.

    With ``closed`` the eye opening, iris and pupil are replaced by an eyelid
    crease.  ``reflections`` holds ``(x, y, radius, intensity)`` glints and
    ``gradient`` an additive intensity ramp per pixel in x and y.
    """

    width: int = 384
    height: int = 288
    pupil_center: tuple[float, float] = (192.0, 144.0)
    pupil_radii: tuple[float, float] = (18.0, 14.0)
    pupil_angle: float = 0.0
    pupil_level: float = 30.0
    iris_radius: float = 40.0
    iris_level: float = 120.0
    sclera_level: float = 220.0
    skin_level: float = 170.0
    eye_radii: tuple[float, float] = (150.0, 95.0)
    blur_sigma: float = 0.0
    noise_amplitude: int = 0
    reflections: tuple = ()
    gradient: tuple[float, float] = (0.0, 0.0)
    closed: bool = False
    seed: int = 0
    area_band: tuple[float, float] = (0.005, 0.10)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.noise_amplitude < 0 or self.blur_sigma < 0:
            raise ValueError("noise and blur must be non-negative")
        if not self.closed:
            a, b = self.pupil_radii
            if a <= 0 or b <= 0:
                raise ValueError("pupil radii must be positive")
            frac = math.pi * a * b / (self.width * self.height)
            lo, hi = self.area_band
            if not lo <= frac <= hi:
                raise ValueError(f"pupil area fraction {frac:.4f} outside band [{lo}, {hi}]")

    @property
    def pupil_area(self) -> float:
        return math.pi * self.pupil_radii[0] * self.pupil_radii[1]


def _inside_ellipse(x, y, cx, cy, a, b, angle):
    c, s = math.cos(angle), math.sin(angle)
    u = (x - cx) * c + (y - cy) * s
    v = -(x - cx) * s + (y - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _coverage(shape, inside, ss: int = 2):
    """Fraction of ``ss x ss`` sub-samples of each pixel for which ``inside`` holds."""
    h, w = shape
    off = (np.arange(ss) + 0.5) / ss - 0.5
    acc = np.zeros(shape, dtype=np.float64)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    for oy in off:
        for ox in off:
            acc += inside(xs + ox, ys + oy)
    return acc / (ss * ss)


def render(spec: SceneSpec) -> tuple[np.ndarray, tuple[float, float] | None]:
    """Rasterise ``spec``; returns the image and the pupil centre (``None`` when closed)."""
    shape = (spec.height, spec.width)
    img = np.full(shape, float(spec.skin_level))
    cx, cy = spec.pupil_center

    def paint(inside, level):
        cov = _coverage(shape, inside)
        img[:] = img * (1.0 - cov) + level * cov

    if spec.closed:
        ea, eb = spec.eye_radii
        # lid crease: thin band along the lower half of a wide ellipse
        crease = lambda x, y: (
            _inside_ellipse(x, y, cx, cy - eb * 0.6, ea, eb, 0.0)
            & ~_inside_ellipse(x, y, cx, cy - eb * 0.6, ea - 3.0, eb - 3.0, 0.0)
            & (y > cy - eb * 0.6)
        )
        paint(crease, spec.iris_level)
    else:
        ea, eb = spec.eye_radii
        paint(lambda x, y: _inside_ellipse(x, y, cx, cy, ea, eb, 0.0), spec.sclera_level)
        r = spec.iris_radius
        paint(
            lambda x, y: ((x - cx) ** 2 + (y - cy) ** 2 <= r * r) & _inside_ellipse(x, y, cx, cy, ea, eb, 0.0),
            spec.iris_level,
        )
        a, b = spec.pupil_radii
        paint(lambda x, y: _inside_ellipse(x, y, cx, cy, a, b, spec.pupil_angle), spec.pupil_level)
    for gx, gy, gr, level in spec.reflections:
        paint(lambda x, y, gx=gx, gy=gy, gr=gr: (x - gx) ** 2 + (y - gy) ** 2 <= gr * gr, level)
    if spec.blur_sigma > 0:
        img = ndimage.gaussian_filter(img, spec.blur_sigma, mode="nearest")
    if spec.gradient != (0.0, 0.0):
        ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
        img = img + spec.gradient[0] * (xs - spec.width / 2.0) + spec.gradient[1] * (ys - spec.height / 2.0)
    if spec.noise_amplitude > 0:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        amp = spec.noise_amplitude
        img = img + rng.integers(-amp, amp + 1, size=shape)
    out = np.clip(round_half_up(img), 0, 255).astype(np.uint8)
    return out, (None if spec.closed else (float(cx), float(cy)))


class _Draw:
    """Integer-only parameter draws mapped onto uniform grids."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def uniform(self, lo: float, hi: float, steps: int = 10000) -> float:
        return lo + (hi - lo) * int(self.rng.integers(0, steps + 1)) / steps

    def integer(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi + 1))


def _open_eye(d: _Draw, width: int, height: int, **over) -> dict:
    area = d.uniform(0.006, 0.016) * width * height
    ratio = d.uniform(0.72, 1.0)
    a = math.sqrt(area / (math.pi * ratio))
    b = a * ratio
    cx = d.uniform(0.38, 0.62) * width
    cy = d.uniform(0.38, 0.62) * height
    p = dict(
        width=width,
        height=height,
        pupil_center=(cx, cy),
        pupil_radii=(a, b),
        pupil_angle=d.uniform(0.0, math.pi),
        pupil_level=d.uniform(15, 45),
        iris_radius=a * d.uniform(1.9, 2.4),
        iris_level=d.uniform(95, 140),
        sclera_level=d.uniform(185, 225),
        skin_level=d.uniform(145, 180),
        eye_radii=(width * d.uniform(0.36, 0.42), height * d.uniform(0.30, 0.36)),
        blur_sigma=1.0,
        noise_amplitude=3,
        gradient=(d.uniform(-0.08, 0.08), d.uniform(-0.08, 0.08)),
        seed=d.integer(0, 2**31 - 1),
    )
    p.update(over)
    return p


def _scene(name: str, d: _Draw, width: int, height: int) -> SceneSpec:
    if name == "clean":
        return SceneSpec(**_open_eye(d, width, height))
    if name == "blurred":
        p = _open_eye(d, width, height)
        p.update(blur_sigma=d.uniform(8.0, 10.0), noise_amplitude=d.integer(10, 14))
        return SceneSpec(**p)
    if name == "reflections":
        p = _open_eye(d, width, height)
        cx, cy = p["pupil_center"]
        a, _ = p["pupil_radii"]
        glints = []
        for _ in range(d.integer(1, 3)):
            ang = d.uniform(0.0, 2.0 * math.pi)
            dist = a * d.uniform(0.2, 1.1)
            glints.append((cx + dist * math.cos(ang), cy + dist * math.sin(ang), d.uniform(2.5, 6.0), d.uniform(230, 255)))
        p.update(reflections=tuple(glints))
        return SceneSpec(**p)
    if name == "dark-surround":
        p = _open_eye(d, width, height)
        p.update(
            pupil_level=d.uniform(15, 30),
            iris_level=d.uniform(50, 70),
            skin_level=d.uniform(60, 90),
            sclera_level=d.uniform(120, 150),
            blur_sigma=1.5,
            noise_amplitude=4,
        )
        return SceneSpec(**p)
    if name == "closed-eye":
        cx = d.uniform(0.4, 0.6) * width
        cy = d.uniform(0.4, 0.6) * height
        skin = d.uniform(150, 185)
        return SceneSpec(
            width=width,
            height=height,
            pupil_center=(cx, cy),
            # faint lid fold, softened by the blur
            iris_level=skin - d.uniform(0.5, 2),
            skin_level=skin,
            eye_radii=(width * d.uniform(0.3, 0.4), height * d.uniform(0.25, 0.35)),
            blur_sigma=2.0,
            noise_amplitude=d.integer(3, 6),
            gradient=(d.uniform(-0.08, 0.08), d.uniform(-0.08, 0.08)),
            closed=True,
            seed=d.integer(0, 2**31 - 1),
        )
    raise ValueError(f"unknown scene class {name!r}; choose from {', '.join(CLASSES)}")


def scene_specs(name: str, n: int, seed: int, width: int = 384, height: int = 288) -> list[SceneSpec]:
    if name not in CLASSES:
        raise ValueError(f"unknown scene class {name!r}; choose from {', '.join(CLASSES)}")
    d = _Draw(np.random.Generator(np.random.PCG64([seed, CLASSES.index(name)])))
    return [_scene(name, d, width, height) for _ in range(n)]


def generate_suite(name: str, n: int, seed: int, width: int = 384, height: int = 288) -> list:
    """``n`` rendered scenes of a challenge class as ``(image, center_or_None)`` pairs."""
    return [render(s) for s in scene_specs(name, n, seed, width, height)]


def save_suite(directory, suite, prefix: str = "img", gt_name: str = "gt.csv") -> Path:
    """Write PGM files and a ``filename,x,y`` ground-truth CSV (blank x,y: no pupil)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gt_path = directory / gt_name
    with open(gt_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "x", "y"])
        for i, (img, center) in enumerate(suite):
            fname = f"{prefix}{i:05d}.pgm"
            save_pgm(directory / fname, img)
            if center is None:
                writer.writerow([fname, "", ""])
            else:
                writer.writerow([fname, repr(center[0]), repr(center[1])])
    return gt_path
