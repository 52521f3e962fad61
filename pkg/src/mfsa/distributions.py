"""Analytic densities of normalized kNN distances and of local FSA estimates.

Under a locally uniform density the local estimate ``d = ln 2 / ln(R_2k/R_k)``
has a closed-form density that depends only on ``k`` and the intrinsic
dimension ``D``.  Substituting ``a = 2**(-D/d)`` turns it into a
``Beta(k, k)`` variable, so the cdf is ``I_a(k, k)`` and the median sits at
``d = D`` for every ``k``.

All densities are evaluated in log space to survive large ``k * D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import betainc, betainc_pair, log_beta

__all__ = [
    "pdf_normalized_distance",
    "fsa_logpdf",
    "fsa_pdf",
    "fsa_cdf",
    "fsa_sf",
    "fsa_quantile",
    "median_sampling_pdf",
    "median_sampling_cdf",
    "FsaDistribution",
    "MedianSamplingDistribution",
]

LN2 = math.log(2.0)


def _check_k(k):
    if int(k) != k or k < 1:
        raise ValueError(f"neighborhood order k must be a positive integer, got {k}")
    return int(k)


def _check_dim(D):
    if not D > 0 or not np.isfinite(D):
        raise ValueError(f"intrinsic dimension must be positive and finite, got {D}")
    return float(D)


def _positive(x, name):
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError(f"{name} must be positive")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def pdf_normalized_distance(r, k, Km1, D):
    """Density of ``r = R_k / R_K`` given ``K - 1`` points in the neighborhood.

    ``D / B(k, K-k) * r**(Dk-1) * (1 - r**D)**(K-k-1)`` with ``K = Km1 + 1``.
    """
    k = _check_k(k)
    Km1 = _check_k(Km1)
    if k > Km1:
        raise ValueError(f"need k <= K-1, got k={k}, K-1={Km1}")
    D = _check_dim(D)
    r = np.asarray(r, dtype=np.float64)
    if np.any((r <= 0.0) | (r >= 1.0)):
        raise ValueError("normalized distance must lie in (0, 1)")
    K = Km1 + 1
    log_r = np.log(r)
    logp = (
        math.log(D)
        - log_beta(k, K - k)
        + (D * k - 1.0) * log_r
        + (K - k - 1) * np.log(-np.expm1(D * log_r))
    )
    return _out(np.exp(logp))


def _log_a(d, D):
    # ln a with a = 2**(-D/d)
    return -D * LN2 / d


def fsa_logpdf(d, k, D):
    """Log density of the local FSA estimate."""
    k = _check_k(k)
    D = _check_dim(D)
    d = _positive(d, "local estimate d")
    log_a = _log_a(d, D)
    logp = math.log(D * LN2) - log_beta(k, k) + k * log_a - 2.0 * np.log(d)
    if k > 1:
        with np.errstate(divide="ignore"):
            logp = logp + (k - 1) * np.log(-np.expm1(log_a))
    return _out(logp)


def fsa_pdf(d, k, D):
    """Density of the local FSA estimate ``d`` for neighborhood order ``k``.

    >>> round(fsa_pdf(2.0, 1, 2.0), 6)
    0.173287
    """
    return _out(np.exp(fsa_logpdf(d, k, D)))


def _cdf_pair(d, k, D):
    d = _positive(d, "local estimate d")
    t = D / d
    a = np.exp2(-t)
    if k == 1:
        return a, -np.expm1(-t * LN2)
    return betainc_pair(a, k, k)


def fsa_cdf(d, k, D):
    """``P(d_k <= d) = I_a(k, k)`` with ``a = 2**(-D/d)``; exactly ``a`` when ``k = 1``."""
    k = _check_k(k)
    D = _check_dim(D)
    return _out(_cdf_pair(d, k, D)[0])


def fsa_sf(d, k, D):
    """Survival function ``1 - fsa_cdf``, computed without cancellation."""
    k = _check_k(k)
    D = _check_dim(D)
    return _out(_cdf_pair(d, k, D)[1])


def _beta_kk_quantile(p, k):
    """Solve ``I_a(k, k) = p`` for ``a`` in ``(0, 1/2]`` (requires ``p <= 1/2``).

    Safeguarded Newton: the bracket ``[lo, hi]`` always contains the root and a
    bisection step replaces any Newton step that would leave it.
    """
    result = np.full_like(p, 0.25)
    idx = np.arange(p.size)
    lo = np.zeros_like(p)
    hi = np.full_like(p, 0.5)
    a = result.copy()
    target = p.copy()
    logB = log_beta(k, k)
    for _ in range(200):
        f = betainc(a, k, k) - target
        lo = np.where(f < 0, a, lo)
        hi = np.where(f > 0, a, hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            dens = np.exp((k - 1) * (np.log(a) + np.log1p(-a)) - logB)
            newton = a - f / dens
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        nxt = np.where(ok, newton, 0.5 * (lo + hi))
        done = (np.abs(nxt - a) <= 1e-15 * nxt) | (f == 0.0)
        result[idx] = nxt
        keep = ~done
        if not keep.any():
            break
        idx, a, lo, hi, target = idx[keep], nxt[keep], lo[keep], hi[keep], target[keep]
    return result


def fsa_quantile(p, k, D):
    """Inverse of :func:`fsa_cdf`: the local estimate at probability ``p``.

    Works on the ``Beta(k, k)`` variable with the symmetry ``I_a = 1 - I_{1-a}``
    so that both tails keep relative precision.
    """
    k = _check_k(k)
    D = _check_dim(D)
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probability must lie in (0, 1)")
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    if k == 1:
        d = -D * LN2 / np.log(p)
        return float(d[0]) if scalar else d
    upper = p > 0.5
    tail = np.where(upper, 1.0 - p, p)
    x = _beta_kk_quantile(tail, k)
    # ln a, where a = x on the lower side and a = 1 - x on the upper side
    log_a = np.where(upper, np.log1p(-x), np.log(x))
    d = -D * LN2 / log_a
    return float(d[0]) if scalar else d


def _check_odd(n):
    if int(n) != n or n < 1 or n % 2 == 0:
        raise ValueError(f"the median sampling density needs an odd sample size, got n={n}")
    return int(n)


def median_sampling_pdf(m, k, D, n):
    """Density of the sample median of ``n = 2l + 1`` i.i.d. local estimates.

    ``[P (1 - P)]**l * q(m) / B(l+1, l+1)`` with ``P`` the local-estimate cdf
    at ``m`` and ``q`` its density.
    """
    k = _check_k(k)
    D = _check_dim(D)
    n = _check_odd(n)
    m = _positive(m, "median m")
    l = (n - 1) // 2
    logq = np.asarray(fsa_logpdf(m, k, D))
    if l == 0:
        return _out(np.exp(logq))
    P, Q = _cdf_pair(m, k, D)
    with np.errstate(divide="ignore"):
        logp = -log_beta(l + 1, l + 1) + l * (np.log(P) + np.log(Q)) + logq
    return _out(np.exp(logp))


def median_sampling_cdf(m, k, D, n):
    """``P(median <= m) = I_P(l+1, l+1)``, the cdf of the middle order statistic."""
    k = _check_k(k)
    D = _check_dim(D)
    n = _check_odd(n)
    m = _positive(m, "median m")
    l = (n - 1) // 2
    P = _cdf_pair(m, k, D)[0]
    return _out(betainc(np.clip(P, 0.0, 1.0), l + 1, l + 1))


@dataclass(frozen=True)
class FsaDistribution:
    """Distribution of a local FSA estimate for neighborhood order ``k``."""

    k: int
    D: float

    def __post_init__(self):
        _check_k(self.k)
        _check_dim(self.D)

    def pdf(self, d):
        return fsa_pdf(d, self.k, self.D)

    def logpdf(self, d):
        return fsa_logpdf(d, self.k, self.D)

    def cdf(self, d):
        return fsa_cdf(d, self.k, self.D)

    def sf(self, d):
        return fsa_sf(d, self.k, self.D)

    def ppf(self, p):
        return fsa_quantile(p, self.k, self.D)

    def median(self) -> float:
        return float(self.D)

    def rvs(self, size, rng=None):
        """Inverse-cdf samples; ``rng`` is a ``numpy.random.Generator`` or seed."""
        rng = np.random.default_rng(rng)
        u = rng.random(size)
        # Generator.random can return exactly 0.0
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return fsa_quantile(u, self.k, self.D)


@dataclass(frozen=True)
class MedianSamplingDistribution:
    """Distribution of the median of ``n`` (odd) i.i.d. local FSA estimates."""

    k: int
    D: float
    n: int

    def __post_init__(self):
        _check_k(self.k)
        _check_dim(self.D)
        _check_odd(self.n)

    def pdf(self, m):
        return median_sampling_pdf(m, self.k, self.D, self.n)

    def cdf(self, m):
        return median_sampling_cdf(m, self.k, self.D, self.n)
