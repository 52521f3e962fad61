"""Command line entry point: ``mfsa <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.  Each run that writes
files also writes a JSON manifest (resolved configuration, input digests,
version, wall time) next to its outputs.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import io
import json
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationModel, calibrate, preset
from .distributions import fsa_cdf, fsa_pdf, median_sampling_cdf, median_sampling_pdf
from .estimators import METHODS, estimate
from .geometry import PointCloud
from .synthdata import FAMILIES, ManifoldSpec, generate

THREADS_ENV = "MFSA_THREADS"
MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "unrecognized arguments" in message:
            known = [s for a in self._actions for s in a.option_strings]
            bad = message.split(":", 1)[1].split()
            hints = []
            for b in bad:
                close = difflib.get_close_matches(b.split("=")[0], known, n=1)
                if close:
                    hints.append(f"{b} -> did you mean {close[0]}?")
            if hints:
                message += " (" + "; ".join(hints) + ")"
        raise UsageError(f"{self.prog}: {message}")


def _range(text):
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    if hi < lo:
        raise argparse.ArgumentTypeError("empty range")
    return list(range(lo, hi + 1))


def _band(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected low:high in Hz, got {text!r}")
    return lo, hi


def _grid(text):
    try:
        lo, hi, steps = text.split(":")
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps, got {text!r}")


def _auto_int(text):
    return text if text == "auto" else int(text)


def _floats(text):
    return [float(v) for v in text.split(",")]


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path):
    if not Path(path).is_file():
        raise DataError(f"input file not found: {path}")
    return path


def _config(args):
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _write_manifest(path, args, inputs, started, extra=None):
    manifest = {
        "schema_version": MANIFEST_VERSION,
        "subcommand": args.command,
        "config": _config(args),
        "inputs": {str(p): _digest(p) for p in inputs},
        "version": __version__,
        "duration_seconds": time.time() - started,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, default=str))


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _manifest_for(out):
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def cmd_generate(args, started):
    spec = ManifoldSpec(args.family, args.d, args.n, seed=args.seed, ambient_d=args.ambient_d,
                        boundary=args.boundary)
    cloud = generate(spec)
    buf = io.StringIO()
    np.savetxt(buf, cloud.points, delimiter=",", fmt="%.17g")
    _atomic_write(args.out, buf.getvalue())
    _write_manifest(_manifest_for(args.out), args, [], started, {"spec": spec.to_dict()})


def cmd_estimate(args, started):
    _require_file(args.input)
    correction = None
    inputs = [args.input]
    if args.correction:
        correction = CalibrationModel.load(_require_file(args.correction))
        inputs.append(args.correction)
    cloud = PointCloud.from_csv(args.input, args.boundary)
    method = args.method
    if correction is not None and method == "mfsa":
        method = "cmfsa"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate(cloud, args.k, method, correction=correction, ml_aggregate=args.ml_aggregate)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    record = {"method": est.method, "k": est.k, "n": cloud.n, "value": est.value,
              "n_invalid": est.n_invalid}
    text = json.dumps(record)
    if args.out:
        _atomic_write(args.out, text + "\n")
        _write_manifest(_manifest_for(args.out), args, inputs, started)
    else:
        print(text)


def cmd_calibrate(args, started):
    dims = args.d
    order = args.order
    if args.preset:
        cfg = preset(args.preset)
        dims = dims or cfg["dims"]
        args.n = args.n or cfg["n"]
        args.k = args.k or cfg["k"]
        args.boundary = cfg["boundary"] if args.boundary is None else args.boundary
        order = cfg["order"] if order is None else order
    if args.n is None or args.k is None or not dims:
        raise UsageError("calibrate needs --n, --k and --d (or --preset)")
    model = calibrate(args.n, args.k, args.boundary or "hard", dims, args.realizations, args.seed,
                      order=order if order is not None else 1, fit=args.fit, workers=args.threads)
    _atomic_write(args.out, json.dumps(model.to_dict(), indent=2))
    _write_manifest(_manifest_for(args.out), args, [], started)


def cmd_benchmark(args, started):
    from .benchmark import load_suite, run_suite

    _require_file(args.suite)
    inputs = [args.suite]
    calibration = None
    if args.calibration:
        calibration = CalibrationModel.load(_require_file(args.calibration))
        inputs.append(args.calibration)
    suite = load_suite(args.suite)
    for entry in suite:
        for p in entry.csv_paths:
            _require_file(p)
            inputs.append(p)
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    unknown = [e for e in estimators if e not in METHODS]
    if unknown:
        raise UsageError(f"unknown estimators: {', '.join(unknown)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_suite(suite, estimators, args.realizations, args.seed, k=args.k,
                           calibration=calibration, workers=args.threads)
    result.save(args.out)
    _write_manifest(Path(args.out) / "manifest.json", args, inputs, started)


def cmd_pdf(args, started):
    lo, hi, steps = args.grid
    if not 0 < lo < hi or steps < 2:
        raise UsageError("--grid needs 0 < lo < hi and at least 2 steps")
    x = np.linspace(lo, hi, steps)
    if args.median_sampling:
        if args.n is None:
            raise UsageError("--median-sampling needs --n")
        pdf = median_sampling_pdf(x, args.k, args.d_intrinsic, args.n)
        cdf = median_sampling_cdf(x, args.k, args.d_intrinsic, args.n)
    else:
        pdf = fsa_pdf(x, args.k, args.d_intrinsic)
        cdf = fsa_cdf(x, args.k, args.d_intrinsic)
    lines = ["x,pdf,cdf"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(x.tolist(), pdf.tolist(), cdf.tolist())]
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write(args.out, text)
        _write_manifest(_manifest_for(args.out), args, [], started)
    else:
        sys.stdout.write(text)


def _load_series(args):
    from .timeseries import ChannelLayout, MultiChannelSeries

    _require_file(args.input)
    layout = None
    if args.layout:
        layout = ChannelLayout.from_json(_require_file(args.layout))
    return MultiChannelSeries.from_csv(args.input, args.rate, layout)


def _prepared(args, series):
    from .timeseries import preprocess

    return preprocess(series, band=args.band, order=args.order, trim_seconds=args.trim,
                      use_csd=series.layout is not None)


def _tau(args):
    from .timeseries import default_delay

    if args.tau != "auto":
        return int(args.tau)
    f_max = args.band[1] if args.band else args.rate / 4.0
    return default_delay(args.rate, f_max)


def _mean_stsep(x, m, tau, percentiles, dt_max):
    from .timeseries import EmbeddingConfig, first_local_maximum, space_time_separation

    parts = [space_time_separation(ch, EmbeddingConfig(m, tau), percentiles, dt_max) for ch in x]
    contours = np.nanmean([p.contours for p in parts], axis=0)
    j = int(np.argmin(np.abs(np.asarray(parts[0].percentiles) - 50.0)))
    peak = first_local_maximum(contours[:, j])
    return parts[0].dt, parts[0].percentiles, contours, int(peak) if peak else 1


def cmd_stsep(args, started):
    series = _prepared(args, _load_series(args))
    tau = _tau(args)
    dt, pct, contours, stride = _mean_stsep(series.samples, args.m, tau, args.percentiles, args.dtmax)
    lines = ["dt," + ",".join(f"p{p:g}" for p in pct)]
    lines += [f"{d}," + ",".join(repr(float(v)) for v in row) for d, row in zip(dt, contours)]
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(json.dumps({"tau": tau, "suggested_stride": stride}))
    inputs = [args.input] + ([args.layout] if args.layout else [])
    _write_manifest(_manifest_for(args.out), args, inputs, started,
                    {"tau": tau, "suggested_stride": stride})


def cmd_embed(args, started):
    from .timeseries import delay_vectors

    series = _prepared(args, _load_series(args))
    tau = _tau(args)
    if args.stride == "auto":
        stride = _mean_stsep(series.samples, 2, tau, (1, 25, 50), args.dtmax)[3]
    else:
        stride = int(args.stride)
    names = series.layout.nodes if series.layout is not None else [f"ch{i}" for i in range(series.n_channels)]
    files = {}
    for name, ch in zip(names, series.samples):
        v = delay_vectors(ch, args.m, tau)
        for o in range(min(stride, v.shape[0])):
            buf = io.StringIO()
            np.savetxt(buf, v[o::stride], delimiter=",", fmt="%.17g")
            files[f"{name}_s{o}.csv"] = buf.getvalue()
    out = Path(args.out)
    for fname, text in files.items():
        _atomic_write(out / fname, text)
    inputs = [args.input] + ([args.layout] if args.layout else [])
    _write_manifest(out / "manifest.json", args, inputs, started,
                    {"tau": tau, "stride": stride, "files": sorted(files)})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mfsa", description="Median FSA intrinsic dimension tools")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker processes (default from ${THREADS_ENV}, else 1)")
        return sp

    g = add("generate", cmd_generate, "sample a synthetic manifold to CSV")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--d", type=int, required=True, help="intrinsic dimension")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--ambient-d", type=int, default=None)
    g.add_argument("--boundary", choices=("hard", "periodic"), default="hard")
    g.add_argument("--out", required=True)

    e = add("estimate", cmd_estimate, "estimate the intrinsic dimension of a CSV cloud")
    e.add_argument("--input", required=True)
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--method", choices=("mfsa", "mean", "mode", "ml", "fsaml", "cmfsa"), default="mfsa")
    e.add_argument("--boundary", choices=("hard", "periodic"), default="hard")
    e.add_argument("--correction", default=None, help="calibration JSON; turns mfsa into cmfsa")
    e.add_argument("--ml-aggregate", choices=("mean", "median"), default="mean",
                   help="how per-point Levina-Bickel values are pooled for --method ml")
    e.add_argument("--out", default=None)

    c = add("calibrate", cmd_calibrate, "fit the cmFSA correction on hypercubes")
    c.add_argument("--preset", choices=("n2500-k1", "n2500-k5"), default=None)
    c.add_argument("--n", type=int, default=None)
    c.add_argument("--k", type=int, default=None)
    c.add_argument("--boundary", choices=("hard", "periodic"), default=None)
    c.add_argument("--d", type=_range, default=None, help="dimension range lo:hi (inclusive)")
    c.add_argument("--realizations", type=int, default=100)
    c.add_argument("--order", type=_auto_int, default=None)
    c.add_argument("--fit", choices=("mean", "raw", "odr"), default="mean")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)

    b = add("benchmark", cmd_benchmark, "run estimators over a manifold suite")
    b.add_argument("--suite", required=True)
    b.add_argument("--estimators", default="mfsa,ml")
    b.add_argument("--calibration", default=None)
    b.add_argument("--realizations", type=int, default=100)
    b.add_argument("--k", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    d = add("pdf", cmd_pdf, "tabulate the local-estimate (or median) density")
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--d-intrinsic", type=float, required=True)
    d.add_argument("--n", type=int, default=None)
    d.add_argument("--grid", type=_grid, required=True, help="lo:hi:steps")
    d.add_argument("--median-sampling", action="store_true")
    d.add_argument("--out", default=None)

    for name, func, help_ in (("embed", cmd_embed, "preprocess and delay-embed a recording"),
                              ("stsep", cmd_stsep, "space-time separation contours")):
        t = add(name, func, help_)
        t.add_argument("--input", required=True, help="CSV, one row per sample, one column per channel")
        t.add_argument("--rate", type=float, required=True)
        t.add_argument("--band", type=_band, default=(1.0, 30.0))
        t.add_argument("--no-filter", dest="band", action="store_const", const=None)
        t.add_argument("--order", type=int, default=4)
        t.add_argument("--trim", type=float, default=2.0, help="seconds trimmed at both ends")
        t.add_argument("--layout", default=None)
        t.add_argument("--tau", type=_auto_int, default="auto")
        t.add_argument("--dtmax", type=int, default=50)
        t.add_argument("--out", required=True)
        if name == "embed":
            t.add_argument("--m", type=int, default=7)
            t.add_argument("--stride", type=_auto_int, default="auto")
        else:
            t.add_argument("--m", type=int, default=2)
            t.add_argument("--percentiles", type=_floats, default=[1.0, 25.0, 50.0])
    return p


def main(argv=None) -> int:
    started = time.time()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand; see mfsa --help")
        args.func(args, started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
