import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mfsa.distributions import (
    FsaDistribution,
    MedianSamplingDistribution,
    fsa_cdf,
    fsa_pdf,
    fsa_quantile,
    median_sampling_cdf,
    median_sampling_pdf,
    pdf_normalized_distance,
)
from mfsa.special import log_beta


def _in_a(func, k, D):
    """Integrate a density in d after substituting a = 2^(-D/d)."""
    # d = -D ln2 / ln a, dd/da = D ln2 / (a ln(a)^2)
    def g(a):
        d = -D * math.log(2) / math.log(a)
        return func(d) * D * math.log(2) / (a * math.log(a) ** 2)

    return integrate.quad(g, 0, 1, limit=400, epsabs=1e-12, epsrel=1e-12)[0]


def test_normalized_distance_examples():
    r = np.linspace(0.05, 0.95, 10)
    np.testing.assert_allclose(pdf_normalized_distance(r, 1, 1, 1), 1.0)
    assert pdf_normalized_distance(0.5, 1, 1, 2) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "k,Km1,D", [(k, Km1, D) for k in range(1, 6) for Km1 in (2, 5, 10) for D in (1, 4, 20) if k <= Km1]
)
def test_normalized_distance_integrates(k, Km1, D):
    total = integrate.quad(lambda r: pdf_normalized_distance(r, k, Km1, D), 0, 1, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-8)


def test_normalized_distance_domain():
    with pytest.raises(ValueError):
        pdf_normalized_distance(1.5, 1, 2, 2)
    with pytest.raises(ValueError):
        pdf_normalized_distance(0.5, 3, 2, 2)


def test_pdf_at_D_for_k1():
    assert fsa_pdf(2.0, 1, 2.0) == pytest.approx(math.log(2) / 4, rel=1e-15)
    assert fsa_pdf(2.0, 1, 2.0) == pytest.approx(0.173286, abs=1e-6)


@pytest.mark.parametrize("k", [1, 2, 11, 50])
@pytest.mark.parametrize("D", [1, 2, 5, 12])
def test_pdf_integrates_to_one(k, D):
    assert _in_a(lambda d: fsa_pdf(d, k, D), k, D) == pytest.approx(1.0, abs=1e-6)


def test_cdf_examples():
    assert fsa_cdf(1.0, 1, 3.0) == 0.125
    for k in (1, 3, 17):
        assert fsa_cdf(4.2, k, 4.2) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("k,D", [(1, 2), (5, 3), (11, 12), (50, 7)])
def test_cdf_derivative_is_pdf(k, D):
    d = np.linspace(0.3 * D, 3 * D, 25)
    h = 1e-5
    num = (fsa_cdf(d + h, k, D) - fsa_cdf(d - h, k, D)) / (2 * h)
    np.testing.assert_allclose(num, fsa_pdf(d, k, D), atol=1e-6)


def test_beta_pushforward():
    # the density of a = 2^(-D/d) is Beta(k, k)
    for k, D in [(1, 2), (4, 6), (20, 3)]:
        a = np.linspace(0.01, 0.99, 99)
        d = -D * np.log(2) / np.log(a)
        jac = D * np.log(2) / (a * np.log(a) ** 2)
        np.testing.assert_allclose(fsa_pdf(d, k, D) * jac, stats.beta(k, k).pdf(a), atol=1e-9)


def test_logpdf_no_underflow():
    d = np.array([0.5, 1.0, 2.0])
    vals = FsaDistribution(50, 100).logpdf(d)
    # pdf itself underflows to 0 here
    assert np.all(np.isfinite(vals))
    assert vals[0] < -700
    assert FsaDistribution(5, 4).logpdf(3.0) == pytest.approx(math.log(fsa_pdf(3.0, 5, 4)), rel=1e-13)


def test_heavy_tail_k1():
    def truncated_mean(k, D, dmax):
        # in the a-variable: a in [0, 2^(-D/dmax)]
        amax = 2.0 ** (-D / dmax)
        f = lambda a: (-D * math.log(2) / math.log(a)) * math.exp(
            (k - 1) * math.log(a) + (k - 1) * math.log1p(-a) - log_beta(k, k)
        )
        return integrate.quad(f, 0, amax, limit=500, points=[0.5] if amax > 0.5 else None)[0]

    m1 = [truncated_mean(1, 2, dm) for dm in (1e2, 1e4, 1e6)]
    assert m1[0] < m1[1] < m1[2]
    assert m1[2] - m1[1] > 0.5 * (m1[1] - m1[0])
    m2 = [truncated_mean(2, 2, dm) for dm in (1e2, 1e4, 1e6)]
    assert abs(m2[2] - m2[1]) < 1e-2


def test_quantile_examples():
    assert fsa_quantile(0.25, 1, 2.0) == pytest.approx(1.0, rel=1e-15)
    for k in (1, 2, 9, 40):
        assert fsa_quantile(0.5, k, 3.3) == pytest.approx(3.3, rel=1e-12)


def test_quantile_round_trip():
    rng = np.random.default_rng(5)
    p = rng.random(1000)
    for k, D in [(1, 2.0), (3, 7.0), (25, 40.0)]:
        assert np.max(np.abs(fsa_cdf(fsa_quantile(p, k, D), k, D) - p)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 50), st.floats(0.5, 100))
def test_quantile_inverts_cdf(p, k, D):
    d = fsa_quantile(p, k, D)
    assert abs(fsa_cdf(d, k, D) - p) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.floats(0.01, 100))
def test_median_property(k, D):
    assert abs(fsa_cdf(D, k, D) - 0.5) < 1e-10


@pytest.mark.parametrize("k", [1, 11])
@pytest.mark.parametrize("D", [2, 5, 12])
def test_inverse_cdf_samples_ks(k, D):
    dist = FsaDistribution(k, D)
    x = dist.rvs(4000, np.random.default_rng(k * 100 + D))
    assert stats.kstest(x, dist.cdf).pvalue > 0.01


def test_median_sampling_n1_is_fsa_pdf():
    m = np.linspace(0.2, 8, 40)
    np.testing.assert_allclose(median_sampling_pdf(m, 3, 2.0, 1), fsa_pdf(m, 3, 2.0), rtol=1e-13)


@pytest.mark.parametrize("D", [2, 5])
@pytest.mark.parametrize("n", [11, 101, 1001])
def test_median_sampling_integrates(D, n):
    total = _in_a(lambda m: median_sampling_pdf(m, 1, D, n), 1, D)
    assert total == pytest.approx(1.0, abs=1e-5)


def test_median_sampling_rejects_even_n():
    with pytest.raises(ValueError):
        median_sampling_pdf(2.0, 1, 2.0, 10)
    with pytest.raises(ValueError):
        MedianSamplingDistribution(1, 2.0, 4)


def test_median_sampling_cdf_consistent():
    m = np.linspace(1, 3, 9)
    h = 1e-6
    num = (median_sampling_cdf(m + h, 1, 2.0, 11) - median_sampling_cdf(m - h, 1, 2.0, 11)) / (2 * h)
    np.testing.assert_allclose(num, median_sampling_pdf(m, 1, 2.0, 11), atol=1e-5)
    assert median_sampling_cdf(2.0, 1, 2.0, 11) == pytest.approx(0.5, abs=1e-14)


def test_domain_errors():
    with pytest.raises(ValueError):
        fsa_pdf(-1.0, 1, 2)
    with pytest.raises(ValueError):
        fsa_cdf(1.0, 0, 2)
    with pytest.raises(ValueError):
        fsa_quantile(1.0, 1, 2)
