"""Pupil centre detection in eye-camera images.

An ellipse is fitted to filtered Canny edges first; when no ellipse passes
the shape and intensity checks, a coarse position from two circular filters
on a downscaled image is refined and validated instead.

>>> from elsepupil import detect, synth
>>> img, truth = synth.generate_suite("clean", 1, seed=1)[0]
>>> detect(img).stage
'edge'
"""

from .coarse import downscale_mum
from .edges import break_line_algorithmic, filter_edges_morphologic
from .ellipse import EllipseParams, fit_ellipse_lsq, select_best_ellipse
from .lines import Polyline, collect_lines, prune_lines
from .params import ElseParams, load_params
from .pipeline import DetectionResult, DirectorySink, MemorySink, detect, detect_with_debug
from .raster import Region, canny, load_gray_image, normalize, processing_region, save_pgm

__version__ = "0.1.0"

__all__ = [
    "DetectionResult",
    "DirectorySink",
    "ElseParams",
    "EllipseParams",
    "MemorySink",
    "Polyline",
    "Region",
    "__version__",
    "break_line_algorithmic",
    "canny",
    "collect_lines",
    "detect",
    "detect_with_debug",
    "downscale_mum",
    "filter_edges_morphologic",
    "fit_ellipse_lsq",
    "load_gray_image",
    "load_params",
    "normalize",
    "processing_region",
    "prune_lines",
    "save_pgm",
    "select_best_ellipse",
]
