"""Dataset ingestion, detection-rate curves, latency statistics and reports.

Ground truth is a UTF-8 CSV with the header ``filename,x,y``.  A row with
blank ``x`` and ``y`` marks an image without a visible pupil (a closed eye);
such images feed the false-positive count instead of the rate curve.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import ElseParams
from .pipeline import detect
from .raster import ImageFormatError, load_gray_image

__all__ = [
    "DatasetError",
    "Dataset",
    "Evaluation",
    "GroundTruthRecord",
    "ImageOutcome",
    "LatencyStats",
    "RateCurve",
    "aggregate",
    "benchmark",
    "convert_gt",
    "evaluate",
    "list_images",
    "load_dataset",
    "rate_curve",
    "read_baselines",
    "read_ground_truth",
    "sweep",
    "write_report",
]

log = logging.getLogger(__name__)

MAX_ERROR = 15
IMAGE_SUFFIXES = (".pgm", ".png")


class DatasetError(ValueError):
    """Ground truth or image data that cannot be used."""


@dataclass(frozen=True)
class GroundTruthRecord:
    """Hand-labelled pupil centre of one image; ``x``/``y`` are ``None`` for no pupil."""

    filename: str
    x: float | None
    y: float | None
    line: int = 0

    def __post_init__(self):
        if (self.x is None) != (self.y is None):
            raise ValueError("x and y must both be given or both be blank")

    @property
    def has_center(self) -> bool:
        return self.x is not None


def _parse_coord(text: str, path, lineno: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: {what} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DatasetError(f"{path}:{lineno}: {what} is not finite: {text!r}")
    return v


def read_ground_truth(path) -> list[GroundTruthRecord]:
    """Parse a ``filename,x,y`` CSV; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read ground truth {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip().lower() for c in rows[0]] != ["filename", "x", "y"]:
        raise DatasetError(f"{path}:1: expected header 'filename,x,y'")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 fields, got {len(row)}: {','.join(row)!r}")
        name, xs, ys = (c.strip() for c in row)
        if not name:
            raise DatasetError(f"{path}:{lineno}: empty filename")
        if not xs and not ys:
            records.append(GroundTruthRecord(name, None, None, lineno))
            continue
        if not xs or not ys:
            raise DatasetError(f"{path}:{lineno}: x and y must both be given or both be blank")
        x = _parse_coord(xs, path, lineno, "x")
        y = _parse_coord(ys, path, lineno, "y")
        records.append(GroundTruthRecord(name, x, y, lineno))
    return records


@dataclass
class Dataset:
    """Images paired with their ground truth, in ground-truth file order."""

    name: str
    items: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def images(self) -> list[np.ndarray]:
        return [img for img, _ in self.items]


def load_dataset(directory, gt_file, name: str | None = None) -> Dataset:
    """Pair every ground-truth row with its image under ``directory``.

    Rows whose image file is absent are skipped and listed in ``missing``.
    Coordinates outside the image bounds, undecodable images and an empty
    result raise :class:`DatasetError`.
    """
    directory = Path(directory)
    records = read_ground_truth(gt_file)
    ds = Dataset(name or directory.name)
    for rec in records:
        path = directory / rec.filename
        if not path.is_file():
            ds.missing.append(rec.filename)
            continue
        try:
            img = load_gray_image(path)
        except ImageFormatError as exc:
            raise DatasetError(str(exc)) from exc
        h, w = img.shape
        if rec.has_center and not (0 <= rec.x < w and 0 <= rec.y < h):
            raise DatasetError(
                f"{gt_file}:{rec.line}: centre ({rec.x}, {rec.y}) outside {rec.filename} ({w}x{h})"
            )
        ds.items.append((img, rec))
    if ds.missing:
        log.warning("%d ground-truth row(s) reference missing images, skipped", len(ds.missing))
    if not ds.items:
        raise DatasetError(f"no usable image/ground-truth pairs in {directory}")
    return ds


def list_images(directory) -> list[Path]:
    """Raster files under ``directory`` in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


@dataclass(frozen=True)
class RateCurve:
    """Detection rate for every integer pixel error ``0..len(rates)-1``."""

    name: str
    rates: tuple
    count: int

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise ValueError("rates must lie in [0, 1]")
        if any(b < a for a, b in zip(self.rates, self.rates[1:])):
            raise ValueError("rates must be non-decreasing in the error")

    def rate(self, error_px: int) -> float:
        return self.rates[error_px]

    @property
    def max_error(self) -> int:
        return len(self.rates) - 1


def rate_curve(errors, name: str = "", max_error: int = MAX_ERROR) -> RateCurve:
    """``rate(e) = |{error <= e}| / N``; ``inf`` (no detection) never counts."""
    err = np.asarray(list(errors), dtype=np.float64)
    if err.size == 0:
        raise ValueError("need at least one error value")
    hits = [int(np.count_nonzero(err <= e)) for e in range(max_error + 1)]
    return RateCurve(name, tuple(h / err.size for h in hits), int(err.size))


@dataclass(frozen=True)
class ImageOutcome:
    filename: str
    truth: tuple | None
    center: tuple | None
    stage: str
    valid: bool
    error: float
    elapsed_us: float


@dataclass
class Evaluation:
    """Rate curve over labelled images plus the false-positive count over unlabelled ones."""

    name: str
    curve: RateCurve | None
    outcomes: list
    false_positives: int
    closed_count: int

    @property
    def false_positive_rate(self) -> float:
        return self.false_positives / self.closed_count if self.closed_count else math.nan

    @property
    def stage_counts(self) -> Counter:
        return Counter(o.stage for o in self.outcomes)


def evaluate(dataset: Dataset, params: ElseParams | None = None, max_error: int = MAX_ERROR) -> Evaluation:
    """Run the detector on every image and score it against the ground truth.

    A detection with ``stage`` ``none`` counts as a failure at every error.
    On images without a pupil any returned centre is a false positive.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    params = params or ElseParams()
    outcomes = []
    errors = []
    false_pos = closed = 0
    for img, rec in dataset:
        t0 = time.perf_counter()
        res = detect(img, params)
        elapsed = (time.perf_counter() - t0) * 1e6
        if rec.has_center:
            truth = (rec.x, rec.y)
            err = math.inf if res.center is None else math.hypot(res.center[0] - rec.x, res.center[1] - rec.y)
            errors.append(err)
        else:
            truth = None
            err = math.nan
            closed += 1
            false_pos += res.center is not None
        outcomes.append(ImageOutcome(rec.filename, truth, res.center, res.stage, res.valid, err, elapsed))
    curve = rate_curve(errors, dataset.name, max_error) if errors else None
    return Evaluation(dataset.name, curve, outcomes, false_pos, closed)


def aggregate(curves, weighted: bool, name: str | None = None) -> RateCurve:
    """Combine curves: pooled counts when ``weighted``, else the plain mean of rates."""
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    n = len(curves[0].rates)
    if any(len(c.rates) != n for c in curves):
        raise ValueError("curves cover different error ranges")
    name = name or ("weighted" if weighted else "unweighted")
    if len(curves) == 1:
        c = curves[0]
        return RateCurve(name, c.rates, c.count)
    total = sum(c.count for c in curves)
    equal = len({c.count for c in curves}) == 1
    if weighted and not equal:
        # pooled hit counts; each rate is an exact ratio hits / count
        hits = [sum(round(c.rates[e] * c.count) for c in curves) for e in range(n)]
        rates = [h / total for h in hits]
    else:
        # with equal sizes pooling and averaging coincide, so share the formula
        rates = [math.fsum(c.rates[e] for c in curves) / len(curves) for e in range(n)]
    return RateCurve(name, tuple(rates), total)


@dataclass(frozen=True)
class LatencyStats:
    """Per-frame wall-clock statistics in milliseconds."""

    samples: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    stages_ms: dict

    def lines(self) -> list[str]:
        out = [
            f"frames {self.samples}",
            f"mean {self.mean_ms:.3f} ms",
            f"p50 {self.p50_ms:.3f} ms",
            f"p95 {self.p95_ms:.3f} ms",
            f"max {self.max_ms:.3f} ms",
        ]
        out += [f"  {k} {v:.3f} ms" for k, v in self.stages_ms.items()]
        return out


def benchmark(images, params: ElseParams | None = None, repetitions: int = 1, warmup: bool = True) -> LatencyStats:
    """Time single-threaded :func:`detect` calls, ``repetitions`` per image.

    The warmup pass runs every image once untimed.  ``stages_ms`` is the mean
    time per frame spent in each step (a step only a few frames reach is
    averaged over all frames).
    """
    images = list(images)
    if not images:
        raise ValueError("no images to benchmark")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    params = params or ElseParams()
    if warmup:
        for img in images:
            detect(img, params)
    times = []
    stages: dict[str, float] = {}
    for _ in range(repetitions):
        for img in images:
            t0 = time.perf_counter()
            res = detect(img, params)
            times.append(time.perf_counter() - t0)
            for k, v in res.timings.items():
                stages[k] = stages.get(k, 0.0) + v
    ms = np.asarray(times) * 1e3
    n = len(ms)
    return LatencyStats(
        samples=n,
        mean_ms=float(ms.mean()),
        p50_ms=float(np.percentile(ms, 50)),
        p95_ms=float(np.percentile(ms, 95)),
        max_ms=float(ms.max()),
        stages_ms={k: v / n / 1e3 for k, v in stages.items()},
    )


def sweep(dataset: Dataset, name: str, values, params: ElseParams | None = None, max_error: int = MAX_ERROR) -> list:
    """One evaluation per value of parameter ``name``, all other fields fixed.

    Returns ``(value, Evaluation)`` pairs in the given order.
    """
    base = params or ElseParams()
    if name not in base.field_names():
        raise KeyError(f"unknown parameter {name!r}")
    out = []
    for v in values:
        ev = evaluate(dataset, base.replace(**{name: v}), max_error)
        out.append((v, ev))
    return out


def read_baselines(path) -> tuple[list[str], dict]:
    """Competitor rates at 5 px: header ``dataset,<method>,...``, one row per dataset.

    Values are percentages as printed in comparison tables.  Returns the
    method names and ``{dataset: {method: value}}``; an empty file gives
    ``([], {})``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read baseline file {path}: {exc}") from exc
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        return [], {}
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0].lower() != "dataset":
        raise DatasetError(f"{path}:1: expected header 'dataset,<method>,...'")
    methods = header[1:]
    table = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        vals = {}
        for m, cell in zip(methods, row[1:]):
            cell = cell.strip()
            vals[m] = _parse_coord(cell, path, lineno, m) if cell else None
        table[row[0].strip()] = vals
    return methods, table


@dataclass
class ReportFiles:
    written: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6g}" if isinstance(v, float) else str(v)


def write_report(out_dir, curves, baselines=None, figures: bool = True, error_for_table: int = 5) -> ReportFiles:
    """Write rate tables, a gnuplot data file and optionally figures and a baseline table.

    Files: ``results.csv`` (dataset, error_px, rate), ``aggregate.csv`` (mode,
    error_px, rate), ``curves.dat`` (whitespace columns, ``#`` header) and,
    with a non-empty baseline CSV, ``comparison.csv`` at ``error_for_table``
    px in percent.  Figures go to ``rates.png`` next to the tables.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from exc
    rep = ReportFiles()
    n = len(curves[0].rates)

    def write_csv(fname, header, rows):
        path = out / fname
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        except OSError as exc:
            raise DatasetError(f"cannot write {path}: {exc}") from exc
        rep.written.append(path)

    write_csv(
        "results.csv",
        ["dataset", "error_px", "rate"],
        [(c.name, e, _fmt(c.rates[e])) for c in curves for e in range(n)],
    )
    aggs = [aggregate(curves, True), aggregate(curves, False)]
    write_csv(
        "aggregate.csv",
        ["mode", "error_px", "rate"],
        [(a.name, e, _fmt(a.rates[e])) for a in aggs for e in range(n)],
    )
    dat = out / "curves.dat"
    cols = [c.name.replace(" ", "_") or f"set{i}" for i, c in enumerate(curves)] + [a.name for a in aggs]
    lines = ["# error_px " + " ".join(cols)]
    for e in range(n):
        lines.append(f"{e} " + " ".join(f"{c.rates[e]:.6f}" for c in curves + aggs))
    try:
        dat.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot write {dat}: {exc}") from exc
    rep.written.append(dat)

    if baselines is not None:
        methods, table = read_baselines(baselines)
        if not table:
            msg = f"baseline file {baselines} is empty; comparison table omitted"
            log.warning(msg)
            rep.warnings.append(msg)
        else:
            rows = []
            for c in curves:
                ref = table.get(c.name, {})
                rows.append([c.name, f"{100.0 * c.rates[error_for_table]:.2f}"] + [_fmt(ref.get(m)) for m in methods])
            write_csv("comparison.csv", ["dataset", "this_detector"] + methods, rows)

    if figures:
        from .plotting import plot_rate_curves

        rep.written.append(plot_rate_curves(curves + (aggs if len(curves) > 1 else []), out / "rates.png"))
    return rep


def write_outcomes(path, outcomes) -> Path:
    """Per-image log with truth, detection, stage and error."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "truth_x", "truth_y", "x", "y", "stage", "valid", "error_px", "elapsed_us"])
        for o in outcomes:
            tx, ty = o.truth if o.truth else ("", "")
            x, y = o.center if o.center else ("", "")
            err = "" if math.isnan(o.error) else ("inf" if math.isinf(o.error) else f"{o.error:.4f}")
            w.writerow([o.filename, _fmt(tx), _fmt(ty), _fmt(x), _fmt(y), o.stage, int(o.valid), err, f"{o.elapsed_us:.1f}"])
    return path


def convert_gt(raw_path, out_path=None, name_format: str = "{frame}.png", first_frame: int = 1) -> list[list[str]]:
    """Map a whitespace-separated annotation file to ``filename,x,y`` rows.

    Each non-blank line not starting with ``#`` holds ``frame x y`` or just
    ``x y`` (frames then count up from ``first_frame``).  The filename is
    ``name_format.format(frame=...)``.  Rows are written to ``out_path`` when
    given and returned including the header.
    """
    raw_path = Path(raw_path)
    try:
        text = raw_path.read_text(encoding="utf-8", errors="strict")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {raw_path}: {exc}") from exc
    rows = [["filename", "x", "y"]]
    frame = first_frame
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tok = s.replace(",", " ").replace(";", " ").split()
        if len(tok) == 2:
            fr = frame
        elif len(tok) == 3:
            try:
                fr = int(float(tok[0]))
            except ValueError:
                raise DatasetError(f"{raw_path}:{lineno}: frame is not a number: {tok[0]!r}") from None
            tok = tok[1:]
        else:
            raise DatasetError(f"{raw_path}:{lineno}: expected 'x y' or 'frame x y', got {s!r}")
        x = _parse_coord(tok[0], raw_path, lineno, "x")
        y = _parse_coord(tok[1], raw_path, lineno, "y")
        rows.append([name_format.format(frame=fr), repr(x), repr(y)])
        frame = fr + 1
    if out_path is not None:
        try:
            with open(out_path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(rows)
        except OSError as exc:
            raise DatasetError(f"cannot write {out_path}: {exc}") from exc
    return rows
