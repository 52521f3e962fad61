"""Exponential finite-sample and edge correction of the median FSA estimate.

The log relative error ``ln E = ln(D / d)`` of the mFSA estimate ``d`` on
uniform hypercubes is modeled as a polynomial without intercept,
``ln E = sum_i alpha_i d**i``.  The corrected estimate (cmFSA) is
``C(d) = d * exp(sum_i alpha_i d**i)``; with hard boundaries a single term is
enough over moderate dimension ranges.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .errors import CalibrationError, DegenerateDesignError
from .estimators import aggregate_median, local_estimates, round_half_up
from .geometry import Boundary
from .synthdata import hypercube, rng_for

__all__ = [
    "CalibrationModel",
    "ExtrapolationWarning",
    "CALIBRATION_PRESETS",
    "preset",
    "fit_alpha",
    "fit_polynomial",
    "apply_correction",
    "calibrate",
    "calibration_sweep",
    "fit_sweep",
    "integer_mode",
    "miss_probabilities",
]

SCHEMA_VERSION = 1
MAX_AUTO_ORDER = 4

#: Calibration grids keyed by name; ``preset(n=..., k=...)`` looks them up by (n, k).
CALIBRATION_PRESETS = {
    "n2500-k1": {"n": 2500, "k": 1, "boundary": "hard", "dims": list(range(2, 31)), "order": 1},
    "n2500-k5": {"n": 2500, "k": 5, "boundary": "hard", "dims": list(range(2, 81)), "order": "auto"},
}


class ExtrapolationWarning(UserWarning):
    """A correction was applied outside the calibrated estimate range."""


def preset(name=None, *, n=None, k=None) -> dict:
    """Return a calibration preset by name, or by its ``(n, k)`` key."""
    if name is not None:
        return dict(CALIBRATION_PRESETS[name])
    for cfg in CALIBRATION_PRESETS.values():
        if cfg["n"] == n and cfg["k"] == k:
            return dict(cfg)
    raise KeyError(f"no calibration preset for n={n}, k={k}")


def integer_mode(corrected) -> int:
    """Nearest positive integer (halves round up, never below 1)."""
    return int(max(1.0, float(round_half_up(corrected))))


@dataclass
class CalibrationModel:
    """Fitted correction ``d -> d * exp(sum_i coeffs[i-1] * d**i)``."""

    n: int | None
    k: int | None
    boundary: Boundary
    order: int
    coeffs: tuple
    residual_mean: float
    residual_sd: float
    d_range: tuple
    fit: str = "mean"
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.boundary = Boundary.parse(self.boundary)
        self.coeffs = tuple(float(c) for c in self.coeffs)
        self.d_range = (float(self.d_range[0]), float(self.d_range[1]))
        if self.order < 1 or len(self.coeffs) != self.order:
            raise ValueError("order must be >= 1 and match the number of coefficients")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("non-finite correction coefficient")
        if not self.residual_sd >= 0:
            raise ValueError("residual_sd must be non-negative")

    @property
    def alpha(self) -> float:
        """First-order coefficient (the whole model when ``order == 1``)."""
        return self.coeffs[0]

    def log_error(self, d):
        """Modeled ``ln E`` at mFSA value(s) ``d``."""
        d = np.asarray(d, dtype=np.float64)
        return sum(c * d ** (i + 1) for i, c in enumerate(self.coeffs))

    def apply(self, d):
        """Corrected estimate ``d * exp(log_error(d))``; warns when extrapolating."""
        d = np.asarray(d, dtype=np.float64)
        if np.any(d <= 0):
            raise ValueError("the correction needs positive estimates")
        lo, hi = self.d_range
        if np.any((d < lo) | (d > hi)):
            warnings.warn(
                f"correction applied outside the calibrated range [{lo:.4g}, {hi:.4g}]",
                ExtrapolationWarning,
                stacklevel=2,
            )
        out = d * np.exp(self.log_error(d))
        return float(out) if out.ndim == 0 else out

    def invert(self, corrected) -> float:
        """mFSA value inside ``d_range`` whose correction equals ``corrected``."""
        lo, hi = self.d_range
        f = lambda d: math.log(d) + float(self.log_error(d)) - math.log(corrected)
        return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["boundary"] = self.boundary.value
        out["coeffs"] = list(self.coeffs)
        out["d_range"] = list(self.d_range)
        out["schema_version"] = SCHEMA_VERSION
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationModel":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported calibration schema version {version}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "CalibrationModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _pairs(pairs):
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one (D_true, d_est) pair")
    arr = arr.reshape(-1, 2)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("dimensions and estimates must be positive and finite")
    return arr[:, 0], arr[:, 1]


def fit_alpha(pairs) -> float:
    """Through-origin least-squares slope of ``ln(D/d)`` on ``d``.

    >>> fit_alpha([(2.0 * math.e, 2.0)])
    0.5
    """
    D, d = _pairs(pairs)
    return float(np.sum(np.log(D / d) * d) / np.sum(d * d))


def _lstsq(x, y, order):
    """Coefficients of ``y ~ sum_i c_i x**i`` (i = 1..order), no intercept."""
    if len(np.unique(x)) < order + 1:
        raise DegenerateDesignError(
            f"order {order} needs at least {order + 1} distinct estimates, got {len(np.unique(x))}"
        )
    scale = np.max(np.abs(x))
    t = x / scale
    V = np.column_stack([t ** (i + 1) for i in range(order)])
    coef, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    if rank < order:
        raise DegenerateDesignError(f"rank-deficient design (rank {rank} < order {order})")
    return coef / scale ** np.arange(1, order + 1)


def _odr(x, y, order, start):
    from scipy import odr

    model = odr.Model(lambda beta, t: sum(b * t ** (i + 1) for i, b in enumerate(beta)))
    out = odr.ODR(odr.RealData(x, y), model, beta0=list(start)).run()
    return np.asarray(out.beta, dtype=np.float64)


def _monotone(coeffs, d_range) -> bool:
    lo, hi = d_range
    grid = np.linspace(lo, hi, 2001)
    # derivative of ln C(d) = ln d + sum c_i d^i
    slope = 1.0 / grid + sum((i + 1) * c * grid**i for i, c in enumerate(coeffs))
    return bool(np.all(slope > 0))


def _model(coeffs, D, d, *, n=None, k=None, boundary=Boundary.HARD, fit="raw",
           provenance=None, diagnostics=None):
    coeffs = tuple(float(c) for c in coeffs)
    d_range = (float(np.min(d)), float(np.max(d)))
    if not _monotone(coeffs, d_range):
        raise CalibrationError("fitted correction is not increasing over the calibrated range")
    resid = np.log(D / d) - sum(c * d ** (i + 1) for i, c in enumerate(coeffs))
    return CalibrationModel(
        n=n,
        k=k,
        boundary=boundary,
        order=len(coeffs),
        coeffs=coeffs,
        residual_mean=float(np.mean(resid)),
        residual_sd=float(np.std(resid, ddof=1)) if resid.size > 1 else 0.0,
        d_range=d_range,
        fit=fit,
        provenance=provenance or {},
        diagnostics=diagnostics or {},
    )


def fit_polynomial(pairs, s: int, *, n=None, k=None, boundary=Boundary.HARD) -> CalibrationModel:
    """Least-squares fit of ``ln(D/d)`` on ``d, d**2, ..., d**s`` through the origin."""
    if int(s) < 1:
        raise ValueError("polynomial order must be at least 1")
    D, d = _pairs(pairs)
    coeffs = _lstsq(d, np.log(D / d), int(s))
    return _model(coeffs, D, d, n=n, k=k, boundary=boundary, fit="raw")


def apply_correction(d_est, model: CalibrationModel):
    """cmFSA estimate ``d * exp(sum_i alpha_i d**i)``."""
    return model.apply(d_est)


def _mfsa_task(args):
    n, k, boundary, D, seed, r = args
    cloud = hypercube(n, D, rng_for(seed, D, r), boundary)
    return aggregate_median(local_estimates(cloud, k)).value


def calibration_sweep(n, k, boundary, dims, realizations, seed=0, workers=1) -> np.ndarray:
    """mFSA of ``realizations`` uniform hypercubes per dimension in ``dims``.

    Each ``(D, realization)`` cell draws from its own stream keyed by
    ``(seed, D, realization)``, so the result does not depend on ``workers``.
    Returns an array of shape ``(len(dims), realizations)``.
    """
    boundary = Boundary.parse(boundary)
    tasks = [(n, k, boundary, int(D), int(seed), r) for D in dims for r in range(realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_mfsa_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        values = [_mfsa_task(t) for t in tasks]
    return np.asarray(values, dtype=np.float64).reshape(len(dims), realizations)


def _fit_points(dims, estimates, fit):
    D = np.repeat(np.asarray(dims, dtype=np.float64)[:, None], estimates.shape[1], axis=1)
    if fit == "raw":
        return estimates.ravel(), np.log(D / estimates).ravel()
    return estimates.mean(axis=1), np.log(D / estimates).mean(axis=1)


def _fit_coeffs(x, y, order, fit):
    coeffs = _lstsq(x, y, order)
    if fit == "odr":
        coeffs = _odr(x, y, order, coeffs)
    return coeffs


def fit_sweep(dims, estimates, order=1, fit="mean", *, n=None, k=None,
              boundary=Boundary.HARD, provenance=None) -> CalibrationModel:
    """Fit a correction to a calibration sweep (``estimates[i, r]`` for ``dims[i]``).

    ``fit`` selects the regression: ``"mean"`` (per-dimension means of ``ln E``
    against mean estimates, ordinary least squares), ``"raw"`` (every
    realization), or ``"odr"`` (orthogonal distance regression on the means).
    ``order="auto"`` tries orders 1..4 and keeps the monotone fit with the
    lowest BIC, ``m ln(RSS/m) + s ln m`` over the ``m`` fitted points.
    """
    if fit not in ("mean", "raw", "odr"):
        raise ValueError(f"unknown fit {fit!r}")
    estimates = np.asarray(estimates, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.float64)
    x, y = _fit_points(dims, estimates, fit)
    D_all = np.repeat(dims[:, None], estimates.shape[1], axis=1).ravel()
    d_all = estimates.ravel()
    d_range = (float(d_all.min()), float(d_all.max()))

    diagnostics = {}
    if order == "auto":
        scores = {}
        fits = {}
        for s in range(1, MAX_AUTO_ORDER + 1):
            try:
                c = _fit_coeffs(x, y, s, fit)
            except DegenerateDesignError:
                break
            if not _monotone(c, d_range):
                continue
            resid = y - sum(ci * x ** (i + 1) for i, ci in enumerate(c))
            m = resid.size
            scores[s] = float(m * np.log(np.mean(resid**2)) + s * np.log(m))
            fits[s] = c
        if not scores:
            raise CalibrationError("no monotone polynomial correction of order <= 4")
        chosen = min(scores, key=scores.get)
        coeffs = fits[chosen]
        diagnostics["order_scores"] = {str(s): v for s, v in scores.items()}
        diagnostics["order_selected"] = chosen
    else:
        coeffs = _fit_coeffs(x, y, int(order), fit)

    model = _model(coeffs, D_all, d_all, n=n, k=k, boundary=boundary, fit=fit,
                   provenance=provenance, diagnostics=diagnostics)

    resid = np.log(D_all / d_all) - model.log_error(d_all)
    if resid.size >= 20:
        model.diagnostics["normality_pvalue"] = float(stats.normaltest(resid).pvalue)
    corrected = estimates * np.exp(model.log_error(estimates))
    model.diagnostics["per_dimension"] = [
        {
            "D": float(D),
            "mfsa_mean": float(estimates[i].mean()),
            "cmfsa_mean": float(corrected[i].mean()),
            "cmfsa_error_mean": float((corrected[i] - D).mean()),
            "cmfsa_error_sd": float(corrected[i].std(ddof=1)) if estimates.shape[1] > 1 else 0.0,
        }
        for i, D in enumerate(dims)
    ]
    return model


def calibrate(n, k, boundary, dims, realizations, rng_seed=0, order=1, fit="mean",
              workers=1) -> CalibrationModel:
    """Sample hypercubes, measure mFSA and fit the correction.

    Deterministic given ``rng_seed``; the model records the grid, seed and
    number of realizations.
    """
    if n < 2 * k + 1:
        raise ValueError(f"calibration with k={k} needs n >= {2 * k + 1}")
    dims = [int(D) for D in dims]
    if not dims:
        raise ValueError("need at least one calibration dimension")
    estimates = calibration_sweep(n, k, boundary, dims, realizations, rng_seed, workers)
    provenance = {
        "seed": int(rng_seed),
        "dims": dims,
        "realizations": int(realizations),
        "order_requested": order,
        "rng": "PCG64/SeedSequence(seed, D, realization)",
    }
    return fit_sweep(dims, estimates, order, fit, n=n, k=k, boundary=Boundary.parse(boundary),
                     provenance=provenance)


def miss_probabilities(D: int, model: CalibrationModel, max_miss: int = 2) -> np.ndarray:
    """Probability that the rounded cmFSA misses ``D`` by 0, 1, ..., ``max_miss`` or more.

    Assumes the log-error residuals are normal with the model's mean and sd.
    Under that model the corrected estimate is ``D * exp(-residual)``.
    """
    D = int(D)
    mu, sd = model.residual_mean, model.residual_sd
    if sd <= 0:
        raise ValueError("needs a positive residual_sd")
    dist = stats.norm(mu, sd)

    def p_round_to(j):
        # P(integer_mode(D exp(-rho)) == j)
        lo_c = j - 0.5
        hi_c = j + 0.5
        upper_rho = math.inf if (j == 1 or lo_c <= 0) else -math.log(lo_c / D)
        lower_rho = -math.log(hi_c / D)
        return dist.cdf(upper_rho) - dist.cdf(lower_rho)

    out = np.zeros(max_miss + 1)
    out[0] = p_round_to(D)
    for m in range(1, max_miss):
        out[m] = p_round_to(D + m) + (p_round_to(D - m) if D - m >= 1 else 0.0)
    out[max_miss] = max(0.0, 1.0 - out[:max_miss].sum())
    return out
