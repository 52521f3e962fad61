"""Estimator sweeps over manifold suites, with MPE and error-rate metrics.

Raw per-cell records are the primary output; every aggregate can be
recomputed from them.  A failing cell is recorded with its error message and
left out of the aggregates instead of aborting the sweep.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationModel, integer_mode
from .estimators import (
    GlobalEstimate,
    aggregate_mean,
    aggregate_median,
    aggregate_mode,
    fsa_ml_solve,
    local_estimates,
    local_levina_bickel,
)
from .geometry import Boundary, PointCloud
from .synthdata import ManifoldSpec, generate

__all__ = [
    "SuiteEntry",
    "BenchmarkRecord",
    "BenchmarkResult",
    "load_suite",
    "mpe",
    "error_rate",
    "run_suite",
]

RAW_FIELDS = ("manifold", "realization", "estimator", "true_d", "estimate", "error")


def _matrix(true_ds, estimates):
    true_ds = np.asarray(true_ds, dtype=np.float64).ravel()
    est = np.asarray(estimates, dtype=np.float64)
    if est.ndim == 1:
        est = est[:, None]
    if est.ndim != 2 or est.shape[0] != true_ds.size:
        raise ValueError(
            f"estimates must have one row per manifold: {true_ds.size} true dimensions, "
            f"estimate shape {np.shape(estimates)}"
        )
    if np.any(true_ds <= 0):
        raise ValueError("true dimensions must be positive")
    return true_ds, est


def mpe(true_ds, estimates) -> float:
    """Mean percentage error ``100/(MN) sum_j sum_i |D_j - d_ij| / D_j``.

    ``estimates`` is an ``M x N`` matrix (manifolds by realizations).  NaN
    cells (failed runs) are excluded.

    >>> mpe([2, 10], [[2], [9]])
    5.0
    """
    true_ds, est = _matrix(true_ds, estimates)
    rel = np.abs(true_ds[:, None] - est) / true_ds[:, None]
    rel = rel[np.isfinite(rel)]
    if rel.size == 0:
        return math.nan
    return float(100.0 * rel.mean())


def error_rate(true_ds, estimates, rounding=integer_mode) -> float:
    """Fraction of cells whose rounded estimate differs from the true dimension."""
    true_ds, est = _matrix(true_ds, estimates)
    ok = np.isfinite(est)
    if not ok.any():
        return math.nan
    misses = 0
    for j, i in zip(*np.nonzero(ok)):
        misses += rounding(est[j, i]) != true_ds[j]
    return float(misses / np.count_nonzero(ok))


@dataclass(frozen=True)
class SuiteEntry:
    """One manifold of a suite: generated from a spec or read from CSV files."""

    name: str
    true_d: int
    spec: ManifoldSpec | None = None
    csv_paths: tuple = ()
    boundary: Boundary = Boundary.HARD

    def cloud(self, realization: int, seed_key) -> PointCloud:
        if self.spec is not None:
            return generate(self.spec.with_seed(seed_key))
        return PointCloud.from_csv(self.csv_paths[realization], self.boundary)

    def n_realizations(self, requested: int) -> int:
        return requested if self.spec is not None else len(self.csv_paths)


def load_suite(path) -> list:
    """Read a suite JSON file.

    Format::

        {"n": 2500,
         "manifolds": [
            {"name": "M10a", "family": "hypercube", "d": 10},
            {"name": "ext", "csv": ["a.csv", "b.csv"], "true_d": 3}]}

    ``n`` and ``boundary`` at top level are defaults for generated entries.
    Relative CSV paths are resolved against the suite file's directory.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    return suite_from_dict(data, base=path.parent)


def suite_from_dict(data: dict, base=Path(".")) -> list:
    default_n = data.get("n", 2500)
    default_boundary = data.get("boundary", "hard")
    entries = []
    for i, item in enumerate(data["manifolds"]):
        name = item.get("name", f"M{i}")
        boundary = Boundary.parse(item.get("boundary", default_boundary))
        if "csv" in item:
            files = item["csv"] if isinstance(item["csv"], list) else [item["csv"]]
            paths = tuple(str(Path(base) / f) for f in files)
            entries.append(SuiteEntry(name, int(item["true_d"]), None, paths, boundary))
            continue
        d = int(item.get("d", item.get("intrinsic_d", item.get("true_d", 0))))
        spec = ManifoldSpec(
            item["family"],
            d,
            int(item.get("n", default_n)),
            ambient_d=item.get("ambient_d"),
            boundary=boundary,
            params=item.get("params", {}),
        )
        entries.append(SuiteEntry(name, int(item.get("true_d", d)), spec, (), boundary))
    return entries


@dataclass(frozen=True)
class BenchmarkRecord:
    manifold: str
    realization: int
    estimator: str
    true_d: int
    estimate: float
    error: str = ""


@dataclass
class BenchmarkResult:
    """Raw per-cell records plus the aggregates derived from them."""

    records: list
    config: dict = field(default_factory=dict)

    def estimators(self) -> list:
        return list(dict.fromkeys(r.estimator for r in self.records))

    def manifolds(self) -> list:
        return list(dict.fromkeys(r.manifold for r in self.records))

    def matrix(self, estimator: str):
        """``(true_ds, estimates)`` for one estimator; failed cells are NaN."""
        names = self.manifolds()
        rows = {m: {} for m in names}
        true = {}
        for r in self.records:
            if r.estimator != estimator:
                continue
            rows[r.manifold][r.realization] = r.estimate if not r.error else math.nan
            true[r.manifold] = r.true_d
        names = [m for m in names if rows[m]]
        width = max(max(v) + 1 for v in (rows[m].keys() for m in names))
        est = np.full((len(names), width), np.nan)
        for j, m in enumerate(names):
            for i, v in rows[m].items():
                est[j, i] = v
        return np.array([true[m] for m in names], dtype=np.float64), est

    def mean_table(self) -> list:
        """Rows of (manifold, true_d, mean estimate per estimator) in suite order."""
        ests = self.estimators()
        cols = {e: self.matrix(e) for e in ests}
        out = []
        for j, m in enumerate(self.manifolds()):
            true_d = next(r.true_d for r in self.records if r.manifold == m)
            row = {"manifold": m, "true_d": true_d}
            for e in ests:
                vals = cols[e][1][j]
                vals = vals[np.isfinite(vals)]
                row[e] = float(vals.mean()) if vals.size else math.nan
            out.append(row)
        return out

    def metrics(self) -> dict:
        out = {}
        for e in self.estimators():
            true_ds, est = self.matrix(e)
            cells = [r for r in self.records if r.estimator == e]
            out[e] = {
                "mpe": mpe(true_ds, est),
                "error_rate": error_rate(true_ds, est),
                "n_cells": len(cells),
                "n_failed": sum(1 for r in cells if r.error),
            }
        return out

    def save(self, out_dir) -> None:
        """Write ``raw.csv``, ``table.csv`` and ``metrics.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "raw.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RAW_FIELDS)
            for r in self.records:
                w.writerow([r.manifold, r.realization, r.estimator, r.true_d, repr(float(r.estimate)), r.error])
        ests = self.estimators()
        metrics = self.metrics()
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["manifold", "true_d", *ests])
            for row in self.mean_table():
                w.writerow([row["manifold"], row["true_d"], *(repr(row[e]) for e in ests)])
            w.writerow(["MPE", "", *(repr(metrics[e]["mpe"]) for e in ests)])
            w.writerow(["error_rate", "", *(repr(metrics[e]["error_rate"]) for e in ests)])
        payload = {"schema_version": 1, "metrics": metrics, "config": self.config}
        (out / "metrics.json").write_text(json.dumps(payload, indent=2))

    @classmethod
    def from_raw_csv(cls, path) -> "BenchmarkResult":
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                records.append(
                    BenchmarkRecord(
                        row["manifold"],
                        int(row["realization"]),
                        row["estimator"],
                        int(row["true_d"]),
                        float(row["estimate"]),
                        row["error"],
                    )
                )
        return cls(records)


def _estimates_for_cloud(cloud, estimators, k, calibration):
    """Run every requested estimator on one cloud, sharing the local FSA values."""
    results = {}
    fsa_family = {"mfsa", "mean", "mode", "fsaml", "cmfsa"}
    locals_ = None
    locals_error = None
    if fsa_family & set(estimators):
        try:
            locals_ = local_estimates(cloud, k)
        except Exception as exc:  # recorded per cell
            locals_error = exc
    for name in estimators:
        try:
            if name == "ml":
                value = aggregate_mean(local_levina_bickel(cloud, k)).value
            else:
                if locals_error is not None:
                    raise locals_error
                if name == "mfsa":
                    value = aggregate_median(locals_).value
                elif name == "mean":
                    value = aggregate_mean(locals_).value
                elif name == "mode":
                    value = aggregate_mode(locals_).value
                elif name == "fsaml":
                    value = fsa_ml_solve(locals_, k)
                elif name == "cmfsa":
                    if calibration is None:
                        raise ValueError("cmfsa needs a calibration model")
                    value = float(calibration.apply(aggregate_median(locals_).value))
                else:
                    raise ValueError(f"unknown estimator {name!r}")
            results[name] = (float(value), "")
        except Exception as exc:
            results[name] = (math.nan, f"{type(exc).__name__}: {exc}")
    return results


def _run_cell(args):
    entry, j, r, seed, estimators, k, calibration = args
    try:
        cloud = entry.cloud(r, (seed, j, r))
    except Exception as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return [BenchmarkRecord(entry.name, r, e, entry.true_d, math.nan, msg) for e in estimators]
    res = _estimates_for_cloud(cloud, estimators, k, calibration)
    return [BenchmarkRecord(entry.name, r, e, entry.true_d, *res[e]) for e in estimators]


def run_suite(suite, estimators, realizations, seed=0, k=5, calibration: CalibrationModel = None,
              workers=1) -> BenchmarkResult:
    """Run ``estimators`` on ``realizations`` samples of every suite entry.

    ``suite`` is a list of :class:`SuiteEntry` or :class:`ManifoldSpec`.
    Realization ``r`` of entry ``j`` is sampled with seed key ``(seed, j, r)``.
    """
    entries = []
    for j, item in enumerate(suite):
        if isinstance(item, ManifoldSpec):
            item = SuiteEntry(f"{item.family}{item.intrinsic_d}", item.intrinsic_d, item)
        entries.append(item)
    estimators = [e.lower() for e in estimators]
    if "cmfsa" in estimators and calibration is None:
        raise ValueError("cmfsa needs a calibration model")
    tasks = [
        (entry, j, r, int(seed), estimators, k, calibration)
        for j, entry in enumerate(entries)
        for r in range(entry.n_realizations(realizations))
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    config = {
        "estimators": estimators,
        "realizations": int(realizations),
        "seed": int(seed),
        "k": int(k),
        "manifolds": [
            e.spec.to_dict() | {"name": e.name} if e.spec is not None
            else {"name": e.name, "csv": list(e.csv_paths), "true_d": e.true_d}
            for e in entries
        ],
        "calibration": calibration.to_dict() if calibration is not None else None,
    }
    return BenchmarkResult(records, config)
