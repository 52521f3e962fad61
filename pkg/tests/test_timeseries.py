import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsa.timeseries import (
    ChannelLayout,
    EmbeddingConfig,
    MultiChannelSeries,
    bandpass,
    butterworth_gain,
    csd,
    default_delay,
    delay_embed,
    delay_vectors,
    dimension_profile,
    first_local_maximum,
    preprocess,
    space_time_separation,
    standardize,
    stride_subsets,
    trim,
)

RATE = 2048.0


def _sine_gain(f, seconds=40.0):
    t = np.arange(int(seconds * RATE)) / RATE
    x = np.sin(2 * np.pi * f * t)
    y = bandpass(x, 1.0, 30.0, 4, rate=RATE)
    mid = slice(len(t) // 4, 3 * len(t) // 4)
    # least-squares amplitude against the input phase
    basis = np.column_stack([np.sin(2 * np.pi * f * t[mid]), np.cos(2 * np.pi * f * t[mid])])
    coef = np.linalg.lstsq(basis, y[mid], rcond=None)[0]
    return float(np.hypot(*coef))


def test_standardize_examples():
    s = MultiChannelSeries(np.array([[1.0, 2.0, 3.0]]), 10.0)
    np.testing.assert_allclose(standardize(s).samples, [[-1.224744871391589, 0.0, 1.224744871391589]])
    x = np.random.default_rng(0).normal(3, 5, (4, 1000))
    z = standardize(MultiChannelSeries(x, 10.0)).samples
    assert np.max(np.abs(z.mean(axis=1))) < 1e-12
    assert np.max(np.abs(z.std(axis=1) - 1)) < 1e-12
    np.testing.assert_allclose(standardize(MultiChannelSeries(z, 10.0)).samples, z, atol=1e-12)


def test_standardize_names_constant_channel():
    lay = ChannelLayout.strip(3)
    s = MultiChannelSeries(np.array([[1.0, 2.0], [5.0, 5.0], [0.0, 1.0]]), 1.0, lay)
    with pytest.raises(ValueError, match=lay.nodes[1]):
        standardize(s)


def test_laplacian_structure():
    grid = ChannelLayout.grid(4, 5)
    L = grid.laplacian()
    assert np.all(L.sum(axis=1) == 0)
    assert L[0, 0] == 2  # corner
    assert L[1, 1] == 3  # edge
    assert L[6, 6] == 4  # interior
    both = ChannelLayout.combine(ChannelLayout.grid(8, 8), ChannelLayout.strip(6), ChannelLayout.strip(4))
    assert both.laplacian().shape == (74, 74)
    assert np.all(both.laplacian().sum(axis=1) == 0)
    A = both.adjacency
    assert np.array_equal(A, A.T) and not np.any(np.diag(A))


def test_csd_chain_row_and_constant_frame():
    lay = ChannelLayout.strip(5)
    x = np.random.default_rng(1).normal(size=(5, 20))
    y = csd(MultiChannelSeries(x, 1.0, lay)).samples
    np.testing.assert_allclose(y[2], 2 * x[2] - x[1] - x[3])
    const = np.tile(np.random.default_rng(2).normal(size=20), (5, 1))
    assert np.all(csd(MultiChannelSeries(const, 1.0, lay)).samples == 0.0)


def test_csd_warns_on_isolated_node():
    lay = ChannelLayout(["a", "b", "c"], np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))
    with pytest.warns(RuntimeWarning, match="c"):
        out = csd(MultiChannelSeries(np.ones((3, 4)) * [[1], [2], [3]], 1.0, lay))
    assert np.all(out.samples[2] == 0)


def test_layout_json_round_trip(tmp_path):
    lay = ChannelLayout.grid(2, 3)
    p = tmp_path / "layout.json"
    p.write_text(json.dumps(lay.to_dict()))
    back = ChannelLayout.from_json(p)
    assert back.nodes == lay.nodes
    np.testing.assert_array_equal(back.adjacency, lay.adjacency)


def test_layout_validation():
    with pytest.raises(ValueError):
        ChannelLayout(["a", "b"], np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        MultiChannelSeries(np.zeros((3, 10)), 1.0, ChannelLayout.strip(2))
    with pytest.raises(ValueError):
        MultiChannelSeries(np.zeros((3, 10)), 0.0)


@pytest.mark.parametrize("f", [0.5, 10.0, 29.0, 100.0, 200.0])
def test_bandpass_matches_analytic_gain(f):
    assert abs(_sine_gain(f) - butterworth_gain(f, 1.0, 30.0, 4, RATE)) < 0.02


def test_bandpass_passband_and_stopband():
    assert 0.95 <= _sine_gain(10.0) <= 1.0
    assert _sine_gain(200.0) < 0.02


def test_bandpass_kills_dc_and_is_linear():
    t = np.arange(int(20 * RATE)) / RATE
    dc = bandpass(np.full(t.size, 3.0), 1.0, 30.0, 4, rate=RATE)
    assert np.max(np.abs(dc[int(4 * RATE) : -int(4 * RATE)])) < 3e-3
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=4096), rng.normal(size=4096)
    lhs = bandpass(2.5 * x - 0.7 * y, 1.0, 30.0, 4, rate=RATE)
    rhs = 2.5 * bandpass(x, 1.0, 30.0, 4, rate=RATE) - 0.7 * bandpass(y, 1.0, 30.0, 4, rate=RATE)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_bandpass_argument_checks():
    with pytest.raises(ValueError):
        bandpass(np.zeros(100), 1.0, 2000.0, 4, rate=RATE)
    with pytest.raises(ValueError):
        bandpass(np.zeros(100), 1.0, 30.0, 3, rate=RATE)


def test_preprocess_and_trim():
    rng = np.random.default_rng(3)
    s = MultiChannelSeries(rng.normal(size=(3, int(10 * RATE))), RATE, ChannelLayout.strip(3))
    out = preprocess(s)
    assert out.n_samples == s.n_samples - 2 * int(2 * RATE)
    assert trim(s, 0).n_samples == s.n_samples


def test_default_delay():
    assert default_delay(2048, 30) == 17
    assert default_delay(100, 1000) == 1


def test_delay_examples():
    x = np.arange(1.0, 7.0)
    np.testing.assert_array_equal(delay_embed(x, EmbeddingConfig(3, 2)).points, [[1, 3, 5], [2, 4, 6]])
    np.testing.assert_array_equal(delay_embed(x, EmbeddingConfig(1, 4)).points[:, 0], x)
    with pytest.raises(ValueError, match="insufficient length"):
        delay_vectors(x, 4, 2)


def test_embedding_config_validation():
    with pytest.raises(ValueError):
        EmbeddingConfig(2, 1, stride=3, offset=3)
    with pytest.raises(ValueError):
        EmbeddingConfig(0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.integers(1, 6), st.integers(1, 9), st.integers(1, 12), st.data())
def test_point_count_formula(T, m, tau, stride, data):
    offset = data.draw(st.integers(0, stride - 1))
    x = np.arange(T, dtype=float)
    full = T - (m - 1) * tau
    expected = -(-(full - offset) // stride) if full > 0 else 0
    if expected <= 0:
        with pytest.raises(ValueError):
            delay_embed(x, EmbeddingConfig(m, tau, stride, offset))
    else:
        assert delay_embed(x, EmbeddingConfig(m, tau, stride, offset)).n == expected


def test_stride_subsets_partition():
    x = np.random.default_rng(0).normal(size=503)
    v = delay_vectors(x, 3, 2)
    parts = stride_subsets(x, 3, 2, 10)
    stacked = np.vstack([p.points for p in parts])
    assert stacked.shape == v.shape
    assert {tuple(r) for r in stacked} == {tuple(r) for r in v}


def test_stsep_white_noise_flat():
    x = np.random.default_rng(0).normal(size=20_000)
    res = space_time_separation(x, EmbeddingConfig(2, 1), dt_max=40)
    assert res.suggested_stride == 1
    c = res.contours
    assert np.all(np.diff(c, axis=1) >= 0)
    # from dt = 2 on the paired vectors share no samples
    assert np.ptp(c[1:, 2]) / c[1:, 2].mean() < 0.03


def test_stsep_sinusoid_periodic():
    P = 20
    x = np.sin(2 * np.pi * np.arange(4000) / P)
    res = space_time_separation(x, EmbeddingConfig(2, 5), dt_max=60)
    med = res.contours[:, 2]
    # zero separation at multiples of the period, largest at half periods
    np.testing.assert_allclose(med[[P - 1, 2 * P - 1, 3 * P - 1]], 0.0, atol=1e-9)
    np.testing.assert_allclose(med[P // 2 - 1], med[P + P // 2 - 1], rtol=1e-9)
    assert res.suggested_stride == P // 2


def test_stsep_missing_cells():
    res = space_time_separation(np.random.default_rng(0).normal(size=30), EmbeddingConfig(2, 1), dt_max=25)
    assert np.isnan(res.contours[-1]).all()
    assert not np.isnan(res.contours[0]).any()


def test_first_local_maximum():
    assert first_local_maximum([1, 2, 3, 2, 5]) == 3
    assert first_local_maximum([1, 1.01, 1.0, 1.02]) is None
    assert first_local_maximum([3, 2, 1]) is None
    # plateau peaks report their middle; NaN ends the search
    assert first_local_maximum([1, 4, 4, 4, 1]) == 3
    assert first_local_maximum([1, 2, np.nan, 1, 5, 1]) is None


def test_profile_m1_is_one_and_noise_grows():
    rng = np.random.default_rng(4)
    smooth = np.sin(0.01 * np.arange(5000)) + 0.3 * np.sin(0.0173 * np.arange(5000))
    prof = dimension_profile(smooth, [1], k_range=range(10, 21))
    assert abs(prof.estimates[0] - 1.0) < 0.1
    noise = rng.normal(size=5000)
    prof = dimension_profile(noise, [1, 2, 3, 4], k_range=range(10, 13))
    assert np.all(np.diff(prof.estimates) > 0.5)
    assert prof.estimates[-1] > 3.3
    assert prof.saturation_m is None
