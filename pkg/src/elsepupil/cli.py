"""Command-line entry point: ``elsepupil <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import evaluation as ev
from . import synth
from .params import ElseParams, ParamsError, load_params, parse_param_value
from .pipeline import DirectorySink, detect, detect_with_debug
from .raster import ImageFormatError, load_gray_image

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("elsepupil")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _params(args) -> ElseParams:
    return load_params(args.params) if args.params else ElseParams()


def cmd_detect(args) -> int:
    img = load_gray_image(args.image)
    params = _params(args)
    if args.debug:
        sink = DirectorySink(args.debug, prefix=Path(args.image).stem + "_")
        res = detect_with_debug(img, params, sink)
        for w in res.warnings:
            print(f"warning: {w}", file=sys.stderr)
    else:
        res = detect(img, params)
    print(res.line())
    return EXIT_OK


def _summary(e: ev.Evaluation) -> list[str]:
    stages = ", ".join(f"{k}={v}" for k, v in sorted(e.stage_counts.items()))
    out = [f"{e.name}: {len(e.outcomes)} images ({stages})"]
    if e.curve is not None:
        c = e.curve
        picks = [x for x in (0, 2, 5, 10, 15) if x <= c.max_error]
        out.append("  rate " + "  ".join(f"@{x}px {c.rates[x]:.3f}" for x in picks))
    if e.closed_count:
        out.append(f"  false positives {e.false_positives}/{e.closed_count} ({e.false_positive_rate:.3f})")
    return out


def cmd_eval(args) -> int:
    ds = ev.load_dataset(args.images, args.gt, args.name)
    if ds.missing:
        print(f"warning: {len(ds.missing)} image(s) missing, skipped", file=sys.stderr)
    result = ev.evaluate(ds, _params(args), args.max_error)
    for line in _summary(result):
        print(line)
    if args.out:
        out = Path(args.out)
        if result.curve is None:
            out.mkdir(parents=True, exist_ok=True)
            print("warning: no labelled images; rate tables skipped", file=sys.stderr)
            written = []
        else:
            rep = ev.write_report(out, [result.curve], args.baseline, figures=not args.no_figures)
            for w in rep.warnings:
                print(f"warning: {w}", file=sys.stderr)
            written = rep.written
        written.append(ev.write_outcomes(out / "per_image.csv", result.outcomes))
        for p in written:
            print(f"wrote {p}")
    return EXIT_OK


def cmd_bench(args) -> int:
    paths = ev.list_images(args.images)
    if args.limit:
        paths = paths[: args.limit]
    if not paths:
        raise ev.DatasetError(f"no images in {args.images}")
    images = [load_gray_image(p) for p in paths]
    stats = ev.benchmark(images, _params(args), args.reps)
    for line in stats.lines():
        print(line)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _params(args)
    if args.param not in base.field_names():
        raise UsageError(f"unknown parameter {args.param!r}; choose from {', '.join(base.field_names())}")
    try:
        values = [parse_param_value(args.param, v) for v in args.values.split(",") if v.strip()]
    except ParamsError as exc:
        raise UsageError(str(exc)) from exc
    if not values:
        raise UsageError("--values needs at least one value")
    ds = ev.load_dataset(args.images, args.gt, args.name)
    results = ev.sweep(ds, args.param, values, base, args.max_error)
    print(f"{args.param:>24}  rate@5px  false_pos")
    rows = []
    for v, e in results:
        r5 = e.curve.rates[min(5, e.curve.max_error)] if e.curve else float("nan")
        fp = f"{e.false_positives}/{e.closed_count}" if e.closed_count else "-"
        print(f"{v!s:>24}  {r5:8.3f}  {fp}")
        rows.append((v, e))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "sweep.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "value", "error_px", "rate"])
            for v, e in rows:
                if e.curve:
                    w.writerows((args.param, v, i, f"{r:.6g}") for i, r in enumerate(e.curve.rates))
        print(f"wrote {path}")
        if not args.no_figures:
            from .plotting import plot_sweep

            curves = [(v, e.curve) for v, e in rows if e.curve]
            if curves:
                print(f"wrote {plot_sweep(args.param, curves, out / 'sweep.png')}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    try:
        suite = synth.generate_suite(args.cls, args.n, args.seed, args.width, args.height)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    gt = synth.save_suite(args.out, suite)
    print(f"wrote {len(suite)} images and {gt}")
    return EXIT_OK


def cmd_convert_gt(args) -> int:
    rows = ev.convert_gt(args.raw, args.out, args.name_format, args.first_frame)
    if args.out is None:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    else:
        print(f"wrote {len(rows) - 1} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="elsepupil", description="Pupil centre detection and evaluation harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_params(sp):
        sp.add_argument("--params", metavar="FILE", help="key=value parameter file")

    d = sub.add_parser("detect", help="detect the pupil in one image")
    d.add_argument("image")
    with_params(d)
    d.add_argument("--debug", metavar="DIR", help="write intermediate artifacts here")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="detection-rate curve against ground truth")
    e.add_argument("--images", required=True, metavar="DIR")
    e.add_argument("--gt", required=True, metavar="CSV")
    e.add_argument("--out", metavar="DIR", help="write tables and figures here")
    e.add_argument("--max-error", type=int, default=ev.MAX_ERROR)
    e.add_argument("--baseline", metavar="CSV", help="competitor rates at 5 px for a comparison table")
    e.add_argument("--name", help="dataset name (default: directory name)")
    e.add_argument("--no-figures", action="store_true")
    with_params(e)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="per-frame latency")
    b.add_argument("--images", required=True, metavar="DIR")
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--limit", type=int, default=0, help="use only the first N images")
    with_params(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="vary one parameter")
    s.add_argument("--images", required=True, metavar="DIR")
    s.add_argument("--gt", required=True, metavar="CSV")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", metavar="DIR")
    s.add_argument("--max-error", type=int, default=ev.MAX_ERROR)
    s.add_argument("--name")
    s.add_argument("--no-figures", action="store_true")
    with_params(s)
    s.set_defaults(func=cmd_sweep)

    y = sub.add_parser("synth", help="render a synthetic suite")
    y.add_argument("--class", dest="cls", required=True, choices=synth.CLASSES)
    y.add_argument("--n", type=int, required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True, metavar="DIR")
    y.add_argument("--width", type=int, default=384)
    y.add_argument("--height", type=int, default=288)
    y.set_defaults(func=cmd_synth)

    c = sub.add_parser("convert-gt", help="whitespace annotations to filename,x,y CSV")
    c.add_argument("raw")
    c.add_argument("-o", "--out", metavar="CSV", help="output file (default: stdout)")
    c.add_argument("--name-format", default="{frame}.png", help="image name for a frame number")
    c.add_argument("--first-frame", type=int, default=1, help="frame number of the first two-column record")
    c.set_defaults(func=cmd_convert_gt)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"elsepupil: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ev.DatasetError, ImageFormatError, ParamsError, OSError) as exc:
        print(f"elsepupil: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
