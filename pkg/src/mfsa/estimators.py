"""Local FSA estimates, their global aggregates and maximum-likelihood variants.

The local estimate at a point is ``ln 2 / ln(R_2k / R_k)``.  Degenerate
neighborhoods are not perturbed: a tie ``R_k == R_2k`` yields ``inf`` and a
duplicate point (``R_k == 0``) yields ``0``.  Both are counted as invalid and
left out of every aggregate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientSampleError, NoRootError, NoValidEstimatesError
from .geometry import PointCloud, knn_table
from .special import log_beta

__all__ = [
    "LocalEstimateSet",
    "GlobalEstimate",
    "METHODS",
    "fsa_local",
    "local_estimates",
    "aggregate_median",
    "aggregate_mean",
    "aggregate_mode",
    "round_half_up",
    "levina_bickel",
    "local_levina_bickel",
    "fsa_log_likelihood",
    "fsa_ml_score",
    "fsa_ml_solve",
    "estimate",
]

LN2 = math.log(2.0)

#: Estimator names accepted by :func:`estimate`.
METHODS = ("mfsa", "mean", "mode", "ml", "fsaml", "cmfsa")

ML_BRACKET = (1e-6, 1e3)
ML_SCAN_POINTS = 64
ML_XTOL = 1e-9


@dataclass(frozen=True)
class LocalEstimateSet:
    """Per-point local estimates computed with neighborhood order ``k``."""

    k: int
    values: np.ndarray
    source: Optional[PointCloud] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0)

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    @property
    def n_invalid(self) -> int:
        return int(len(self.values) - np.count_nonzero(self.valid))


@dataclass(frozen=True)
class GlobalEstimate:
    """A scalar dimension estimate and the bookkeeping of how it was formed."""

    method: str
    value: float
    k: int
    n_local: int
    n_invalid: int = 0

    def to_dict(self):
        return {
            "method": self.method,
            "k": self.k,
            "n_local": self.n_local,
            "value": self.value,
            "n_invalid": self.n_invalid,
        }


def fsa_local(R_k, R_2k):
    """Local FSA dimension ``ln 2 / ln(R_2k / R_k)``.

    Returns ``inf`` for the degenerate tie ``R_k == R_2k`` and ``0`` when
    ``R_k == 0``; both are treated as invalid downstream.

    >>> fsa_local(1.0, 2.0)
    1.0
    """
    R_k = np.asarray(R_k, dtype=np.float64)
    R_2k = np.asarray(R_2k, dtype=np.float64)
    if np.any(R_k < 0) or np.any(R_2k < R_k):
        raise ValueError("need 0 <= R_k <= R_2k")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = LN2 / np.log(R_2k / R_k)
    out = np.where(R_k == 0.0, 0.0, out)
    out = np.where((R_k == R_2k) & (R_k > 0), np.inf, out)
    return float(out) if out.ndim == 0 else out


def local_estimates(cloud: PointCloud, k: int, method: str = "auto") -> LocalEstimateSet:
    """Local FSA estimate at every point of ``cloud`` (needs ``n >= 2k + 1``)."""
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    if cloud.n < 2 * k + 1:
        raise InsufficientSampleError(
            f"local estimates with k={k} need n >= {2 * k + 1}, got n={cloud.n}"
        )
    table = knn_table(cloud, 2 * k, method=method)
    values = fsa_local(table.distances[:, k - 1], table.distances[:, 2 * k - 1])
    return LocalEstimateSet(k, values, cloud)


def _as_locals(locals_, k=None):
    if isinstance(locals_, LocalEstimateSet):
        return locals_
    return LocalEstimateSet(k if k is not None else 0, np.atleast_1d(locals_))


def _valid_or_raise(locals_):
    vals = locals_.valid_values
    if vals.size == 0:
        raise NoValidEstimatesError("no valid local estimates to aggregate")
    return vals


def aggregate_median(locals_) -> GlobalEstimate:
    """Sample median of the valid local estimates (the mFSA estimate)."""
    locals_ = _as_locals(locals_)
    vals = _valid_or_raise(locals_)
    return GlobalEstimate("mfsa", float(np.median(vals)), locals_.k, vals.size, locals_.n_invalid)


def aggregate_mean(locals_) -> GlobalEstimate:
    locals_ = _as_locals(locals_)
    vals = _valid_or_raise(locals_)
    return GlobalEstimate("mean", float(np.mean(vals)), locals_.k, vals.size, locals_.n_invalid)


def round_half_up(x):
    """Round positive values to the nearest integer, halves away from zero."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def aggregate_mode(locals_) -> GlobalEstimate:
    """Most frequent rounded local estimate; ties go to the smaller integer."""
    locals_ = _as_locals(locals_)
    vals = _valid_or_raise(locals_)
    rounded = np.maximum(round_half_up(vals), 1.0)
    uniq, counts = np.unique(rounded, return_counts=True)
    value = float(uniq[np.argmax(counts)])
    return GlobalEstimate("mode", value, locals_.k, vals.size, locals_.n_invalid)


def levina_bickel(ratios) -> float:
    """Maximum-likelihood dimension ``(K-1) / (-sum ln r_j)`` from normalized distances.

    ``ratios`` are ``r_j = R_j / R_K`` for ``j = 1..K-1``.  Returns ``inf``
    when every ratio equals one and ``0`` when a ratio is zero.

    >>> round(levina_bickel([0.5]), 4)
    1.4427
    """
    r = np.asarray(ratios, dtype=np.float64).ravel()
    if r.size == 0:
        raise ValueError("need at least one ratio")
    if np.any((r < 0) | (r > 1)) or np.any(np.isnan(r)):
        raise ValueError("ratios must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        s = -np.sum(np.log(r))
    if s == 0.0:
        return math.inf
    return float(r.size / s)


def local_levina_bickel(cloud: PointCloud, K: int, method: str = "auto") -> LocalEstimateSet:
    """Local Levina-Bickel estimate at every point with neighborhood size ``K``.

    The returned set has ``k = K``.
    """
    K = int(K)
    if K < 2:
        raise ValueError("the local ML estimate needs K >= 2")
    table = knn_table(cloud, K, method=method)
    R = table.distances
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.log(R[:, : K - 1] / R[:, K - 1 : K])
        s = -np.sum(log_r, axis=1)
        values = (K - 1) / s
    return LocalEstimateSet(K, values, cloud)


def _inv(locals_, k):
    locals_ = _as_locals(locals_, k)
    vals = locals_.valid_values
    if vals.size == 0:
        raise NoValidEstimatesError("no valid local estimates")
    return vals


def fsa_log_likelihood(D, locals_, k) -> float:
    """Log-likelihood of intrinsic dimension ``D`` for i.i.d. local estimates."""
    d = _inv(locals_, k)
    n = d.size
    t = D / d
    return float(
        n * (math.log(LN2) - log_beta(k, k))
        + n * math.log(D)
        - k * LN2 * np.sum(t)
        + (k - 1) * np.sum(np.log(-np.expm1(-t * LN2)))
        - 2.0 * np.sum(np.log(d))
    )


def _score(D, d, k):
    n = d.size
    inv = 1.0 / d
    with np.errstate(over="ignore"):
        tail = inv / np.expm1(D * inv * LN2)
    return n / D - LN2 * k * np.sum(inv) + LN2 * (k - 1) * np.sum(tail)


def fsa_ml_score(D, locals_, k) -> float:
    """Derivative of :func:`fsa_log_likelihood` with respect to ``D``."""
    return float(_score(D, _inv(locals_, k), k))


def fsa_ml_solve(locals_, k: int, numeric: bool = False) -> float:
    """Maximum-likelihood intrinsic dimension from i.i.d. local FSA estimates.

    For ``k = 1`` the root is ``n / (ln 2 * sum 1/d_i)``.  Otherwise the score
    is scanned on 64 log-spaced points of ``(1e-6, 1e3]`` and the single sign
    change is bisected to ``|dD| < 1e-9``.  ``numeric=True`` forces the scan
    and bisection path even when ``k = 1``.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    d = _inv(locals_, k)
    if k == 1 and not numeric:
        return float(d.size / (LN2 * np.sum(1.0 / d)))

    grid = np.geomspace(*ML_BRACKET, ML_SCAN_POINTS)
    scores = np.array([_score(D, d, k) for D in grid])
    signs = np.sign(scores)
    changes = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    exact = np.nonzero(scores == 0.0)[0]
    if exact.size == 1 and changes.size == 0:
        return float(grid[exact[0]])
    if changes.size != 1:
        raise NoRootError(
            f"expected one sign change of the likelihood score on {ML_BRACKET}, found {changes.size}",
            ML_BRACKET,
            int(changes.size),
        )
    lo, hi = grid[changes[0]], grid[changes[0] + 1]
    s_lo = scores[changes[0]]
    while hi - lo >= ML_XTOL:
        mid = 0.5 * (lo + hi)
        s_mid = _score(mid, d, k)
        if s_mid == 0.0:
            return float(mid)
        if np.sign(s_mid) == np.sign(s_lo):
            lo, s_lo = mid, s_mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def estimate(cloud: PointCloud, k: int, method: str = "mfsa", correction=None,
             knn_method: str = "auto", ml_aggregate: str = "mean") -> GlobalEstimate:
    """Global intrinsic dimension of ``cloud`` with one of :data:`METHODS`.

    ``"ml"`` is the Levina-Bickel estimator with neighborhood ``K = k``,
    aggregated over points by ``ml_aggregate`` (``"mean"`` or ``"median"``).  ``"cmfsa"`` needs ``correction``, an object with an
    ``apply(d)`` method such as :class:`mfsa.calibration.CalibrationModel`.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "ml":
        if ml_aggregate not in ("mean", "median"):
            raise ValueError(f"ml_aggregate must be 'mean' or 'median', got {ml_aggregate!r}")
        locals_ = local_levina_bickel(cloud, k, method=knn_method)
        est = aggregate_mean(locals_) if ml_aggregate == "mean" else aggregate_median(locals_)
        return GlobalEstimate("ml", est.value, k, est.n_local, est.n_invalid)

    locals_ = local_estimates(cloud, k, method=knn_method)
    if method == "mean":
        return aggregate_mean(locals_)
    if method == "mode":
        return aggregate_mode(locals_)
    if method == "fsaml":
        value = fsa_ml_solve(locals_, k)
        return GlobalEstimate("fsaml", value, k, len(locals_) - locals_.n_invalid, locals_.n_invalid)
    est = aggregate_median(locals_)
    if method == "cmfsa":
        if correction is None:
            raise ValueError("cmfsa needs a calibration model")
        return GlobalEstimate("cmfsa", float(correction.apply(est.value)), k, est.n_local,
                              est.n_invalid)
    return est
