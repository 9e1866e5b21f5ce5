"""The full detector: ellipse selection on filtered edges, coarse positioning as fallback."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coarse, edges, ellipse, lines, raster
from .params import ElseParams

__all__ = ["DebugSink", "DetectionResult", "DirectorySink", "MemorySink", "detect", "detect_with_debug"]

log = logging.getLogger(__name__)

STAGES = ("edge", "coarse", "none")


@dataclass
class DetectionResult:
    """Outcome for one image.

    ``stage`` names the path that produced ``center``: ``edge`` (ellipse
    centre), ``coarse`` (refined centroid) or ``none``.  ``timings`` holds
    per-step durations in microseconds.
    """

    center: tuple[float, float] | None
    ellipse: ellipse.EllipseParams | None
    stage: str
    valid: bool
    timings: dict = field(default_factory=dict, compare=False)
    warnings: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == "none" and (self.center is not None or self.valid):
            raise ValueError("stage 'none' carries no center and is never valid")
        if self.stage == "edge" and self.ellipse is None:
            raise ValueError("stage 'edge' needs an ellipse")

    def line(self) -> str:
        """``x y stage valid`` as printed by the command line."""
        if self.center is None:
            return f"nan nan {self.stage} {int(self.valid)}"
        return f"{self.center[0]:.3f} {self.center[1]:.3f} {self.stage} {int(self.valid)}"


class DebugSink:
    """Receives intermediate artifacts; subclasses decide where they go.

    ``emit`` gets a name and one of: a boolean edge image, a uint8 image, a
    float response map, or a list of row dicts (table).
    """

    def emit(self, name: str, artifact) -> None:
        raise NotImplementedError


class MemorySink(DebugSink):
    def __init__(self):
        self.artifacts: dict[str, object] = {}

    def emit(self, name, artifact):
        self.artifacts[name] = artifact


def _as_pgm_image(artifact) -> np.ndarray:
    arr = np.asarray(artifact)
    if arr.dtype == bool:
        return arr.astype(np.uint8) * 255
    if arr.dtype == np.uint8:
        return arr
    arr = arr.astype(np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return raster.round_half_up((arr - lo) * 255.0 / (hi - lo)).astype(np.uint8)


class DirectorySink(DebugSink):
    """Writes images as ``<prefix><name>.pgm`` and tables as ``<prefix><name>.csv``."""

    def __init__(self, directory, prefix: str = ""):
        self.directory = Path(directory)
        self.prefix = prefix
        self.written: list[Path] = []

    def emit(self, name, artifact):
        self.directory.mkdir(parents=True, exist_ok=True)
        if isinstance(artifact, list):
            path = self.directory / f"{self.prefix}{name}.csv"
            keys = list(artifact[0].keys()) if artifact else ["line_id"]
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=keys)
                writer.writeheader()
                writer.writerows(artifact)
        else:
            path = self.directory / f"{self.prefix}{name}.pgm"
            raster.save_pgm(path, _as_pgm_image(artifact))
        self.written.append(path)


def _lines_image(shape, line_list) -> np.ndarray:
    img = np.zeros(shape, dtype=bool)
    for ln in line_list:
        img[ln.ys, ln.xs] = True
    return img


def _candidate_rows(records) -> list[dict]:
    rows = []
    for r in records:
        el = r.ellipse
        rows.append(
            {
                "line_id": r.line_index,
                "support": r.support,
                "center_x": el.center_x if el else "",
                "center_y": el.center_y if el else "",
                "a": el.radius_major if el else "",
                "b": el.radius_minor if el else "",
                "angle": el.angle if el else "",
                "ratio_ok": r.checks.get("ratio", ""),
                "area_ok": r.checks.get("area", ""),
                "validity_ok": r.checks.get("validity", ""),
                "surface_diff": "" if math.isnan(r.surface_diff) else r.surface_diff,
                "gray_value": "" if math.isnan(r.gray_value) else r.gray_value,
                "eval": "" if math.isnan(r.eval) else r.eval,
                "verdict": r.verdict,
            }
        )
    return rows


class _Run:
    def __init__(self, sink: DebugSink | None):
        self.sink = sink
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []
        self._t = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = (now - self._t) * 1e6
        self._t = now

    def emit(self, name: str, make) -> None:
        if self.sink is None:
            return
        try:
            self.sink.emit(name, make())
        except Exception as exc:  # a failing sink never changes the detection
            msg = f"debug sink failed on {name!r}: {exc}"
            log.warning(msg)
            self.warnings.append(msg)


def _edge_path(norm, region, params: ElseParams, run: _Run):
    edge = raster.canny(norm, region, params.canny_sigma, params.canny_percentile, params.canny_low_ratio)
    run.lap("canny")
    run.emit("canny", lambda: edge)
    stages = {} if run.sink is not None else None
    if params.use_algorithmic_split:
        work = edges.thin_edges(edge)
        work = edges.delete_junctions(work)
        work = edges.straighten_edges(work)
        if stages is not None:
            stages["thinned_junctions_straightened"] = work
        collected = []
        for ln in lines.collect_lines(work):
            collected.extend(edges.break_line_algorithmic(ln))
        run.lap("filter_edges")
        kept = lines.prune_lines(collected, params.min_mean_line_dist, params.min_line_length)
    else:
        work = edges.filter_edges_morphologic(edge, stages)
        run.lap("filter_edges")
        kept = lines.collect_curved_lines(work, params.min_mean_line_dist, params.min_line_length)
    for name, img in (stages or {}).items():
        run.emit(f"edges_{name}", lambda img=img: img)
    run.lap("collect_lines")
    run.emit("lines", lambda: _lines_image(norm.shape, kept))
    records = ellipse.rate_candidates(norm, kept, params)
    best = ellipse.best_of(records)
    run.lap("select_ellipse")
    run.emit("candidates", lambda: _candidate_rows(records))
    return best


def _coarse_path(norm, region, params: ElseParams, run: _Run):
    h, w = norm.shape
    rf = coarse.radius_filter_for(w, h)
    rs = params.radius_scale
    try:
        small = coarse.downscale_mum(norm, rs)
    except ValueError:
        run.lap("downscale")
        return None
    run.lap("downscale")
    run.emit("coarse_downscaled", lambda: small)
    kernels = coarse.build_kernels(rf)
    if kernels.mean_kernel.shape[0] > min(small.shape):
        run.lap("convolve")
        return None
    surf, inv_mean, resp = coarse.coarse_responses(small, kernels)
    run.emit("coarse_surface", lambda: surf)
    run.emit("coarse_mean_inverted", lambda: inv_mean)
    run.emit("coarse_product", lambda: resp)
    mask = coarse.region_cell_mask(small.shape, rs, region)
    masked = np.where(mask, resp, -np.inf)
    k = int(np.argmax(masked))
    cy, cx = divmod(k, resp.shape[1])
    response = float(masked[cy, cx])
    run.lap("convolve")
    if not response > 0:
        return None
    full = coarse.upscale_position((cx, cy), rs, norm.shape)
    pos = coarse.optimize_position(norm, full, rf, params.size_neighbourhood)
    run.lap("optimize")
    valid = coarse.validate_position(
        norm, pos, rf, params.validity_threshold, params.validation_box_literal
    )
    run.lap("validate")
    return pos if valid else None


def _run(img, params: ElseParams | None, sink: DebugSink | None) -> DetectionResult:
    params = params or ElseParams()
    run = _Run(sink)
    gray = raster.as_gray(img)
    norm = raster.normalize(gray)
    region = raster.processing_region(norm.shape, params.border_fraction)
    run.lap("normalize")
    run.emit("normalized", lambda: norm)
    best = _edge_path(norm, region, params, run)
    if best is not None:
        el = best.ellipse
        return DetectionResult(el.center, el, "edge", True, run.timings, run.warnings)
    pos = _coarse_path(norm, region, params, run)
    if pos is not None:
        return DetectionResult(pos, None, "coarse", True, run.timings, run.warnings)
    return DetectionResult(None, None, "none", False, run.timings, run.warnings)


def detect(img, params: ElseParams | None = None) -> DetectionResult:
    """Locate the pupil centre in an 8-bit grayscale image (``img[y, x]``)."""
    return _run(img, params, None)


def detect_with_debug(img, params: ElseParams | None = None, sink: DebugSink | None = None) -> DetectionResult:
    """As :func:`detect`, also emitting every intermediate artifact to ``sink``.

    Sink errors are logged and listed in ``result.warnings``; they never
    change the detection itself.
    """
    return _run(img, params, sink)
