"""From multichannel recordings to delay-embedded point clouds.

Pipeline: per-channel standardization, current source density as the graph
Laplacian over the electrode layout, zero-phase Butterworth bandpass, edge
trimming, delay embedding and stride subsampling.  Space-time separation
contours help choose the stride; :func:`dimension_profile` tracks the mFSA
estimate as the embedding dimension grows.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .estimators import aggregate_median, fsa_local
from .geometry import Boundary, PointCloud, knn_table

__all__ = [
    "ChannelLayout",
    "MultiChannelSeries",
    "EmbeddingConfig",
    "SpaceTimeSeparation",
    "DimensionProfile",
    "standardize",
    "csd",
    "bandpass",
    "butterworth_gain",
    "trim",
    "preprocess",
    "default_delay",
    "delay_vectors",
    "delay_embed",
    "stride_subsets",
    "space_time_separation",
    "first_local_maximum",
    "dimension_profile",
]


@dataclass(frozen=True)
class ChannelLayout:
    """Electrode topology: node ids and a symmetric 0/1 adjacency matrix."""

    nodes: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=np.float64)
        nodes = tuple(self.nodes)
        if A.shape != (len(nodes), len(nodes)):
            raise ValueError("adjacency must be C x C for C nodes")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def grid(cls, rows: int, cols: int, prefix: str = "G") -> "ChannelLayout":
        """Rectangular grid with von Neumann (4-neighbor) adjacency, row-major."""
        C = rows * cols
        A = np.zeros((C, C))
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    A[i, i + 1] = A[i + 1, i] = 1
                if r + 1 < rows:
                    A[i, i + cols] = A[i + cols, i] = 1
        return cls(tuple(f"{prefix}{i + 1}" for i in range(C)), A)

    @classmethod
    def strip(cls, length: int, prefix: str = "S") -> "ChannelLayout":
        """Linear strip with chain adjacency."""
        return cls.grid(1, length, prefix)

    @classmethod
    def combine(cls, *layouts) -> "ChannelLayout":
        """Disjoint union (block-diagonal adjacency) of several layouts."""
        nodes = tuple(n for lay in layouts for n in lay.nodes)
        A = np.zeros((len(nodes), len(nodes)))
        at = 0
        for lay in layouts:
            c = len(lay)
            A[at : at + c, at : at + c] = lay.adjacency
            at += c
        return cls(nodes, A)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelLayout":
        """``{"nodes": [...], "edges": [[a, b], ...]}`` with undirected edges."""
        nodes = [str(n) for n in data["nodes"]]
        pos = {n: i for i, n in enumerate(nodes)}
        A = np.zeros((len(nodes), len(nodes)))
        for a, b in data.get("edges", []):
            i, j = pos[str(a)], pos[str(b)]
            if i == j:
                raise ValueError(f"self-loop on node {a}")
            A[i, j] = A[j, i] = 1
        return cls(tuple(nodes), A)

    @classmethod
    def from_json(cls, path) -> "ChannelLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        i, j = np.nonzero(np.triu(self.adjacency))
        return {"nodes": list(self.nodes), "edges": [[self.nodes[a], self.nodes[b]] for a, b in zip(i, j)]}

    def laplacian(self) -> np.ndarray:
        """Graph Laplacian ``degree - adjacency``; every row sums to zero."""
        return np.diag(self.adjacency.sum(axis=1)) - self.adjacency


@dataclass(frozen=True)
class MultiChannelSeries:
    """``C x T`` samples recorded at ``rate`` Hz, with an optional layout."""

    samples: np.ndarray
    rate: float
    layout: ChannelLayout | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError("samples must be a C x T matrix")
        if not self.rate > 0:
            raise ValueError("sampling rate must be positive")
        if self.layout is not None and len(self.layout) != x.shape[0]:
            raise ValueError(f"layout has {len(self.layout)} nodes for {x.shape[0]} channels")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples) -> "MultiChannelSeries":
        return replace(self, samples=samples)

    @classmethod
    def from_csv(cls, path, rate, layout=None) -> "MultiChannelSeries":
        """Headerless CSV, one row per time sample and one column per channel."""
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2)
        return cls(data.T, rate, layout)


@dataclass(frozen=True)
class EmbeddingConfig:
    m: int
    tau: int = 1
    stride: int = 1
    offset: int = 0

    def __post_init__(self):
        if self.m < 1 or self.tau < 1 or self.stride < 1:
            raise ValueError("m, tau and stride must be at least 1")
        if not 0 <= self.offset < self.stride:
            raise ValueError("offset must satisfy 0 <= offset < stride")


def standardize(series: MultiChannelSeries) -> MultiChannelSeries:
    """Zero mean, unit (population) standard deviation per channel."""
    x = series.samples
    sd = x.std(axis=1)
    bad = np.nonzero(sd == 0)[0]
    if bad.size:
        name = series.layout.nodes[bad[0]] if series.layout is not None else str(bad[0])
        raise ValueError(f"zero variance in channel {name}")
    return series.with_samples((x - x.mean(axis=1, keepdims=True)) / sd[:, None])


def csd(series: MultiChannelSeries) -> MultiChannelSeries:
    """Current source density ``L x`` with ``L`` the layout's graph Laplacian."""
    if series.layout is None:
        raise ValueError("CSD needs a channel layout")
    isolated = np.nonzero(series.layout.adjacency.sum(axis=1) == 0)[0]
    if isolated.size:
        names = ", ".join(series.layout.nodes[i] for i in isolated)
        warnings.warn(f"isolated channels have zero CSD: {names}", RuntimeWarning, stacklevel=2)
    return series.with_samples(series.layout.laplacian() @ series.samples)


def _band_sos(low_hz, high_hz, order, rate):
    if order < 2 or order % 2:
        raise ValueError("bandpass order must be a positive even number")
    if not 0 < low_hz < high_hz < rate / 2:
        raise ValueError(f"need 0 < low < high < Nyquist ({rate / 2} Hz), got {low_hz}-{high_hz} Hz")
    return signal.butter(order // 2, [low_hz, high_hz], btype="bandpass", fs=rate, output="sos")


def bandpass(series, low_hz=1.0, high_hz=30.0, order=4, rate=None):
    """Zero-phase Butterworth bandpass (forward-backward second-order sections).

    ``order`` is the order of the bandpass filter, so the lowpass prototype has
    order ``order / 2``.  Accepts a :class:`MultiChannelSeries` or an array
    (time on the last axis) together with ``rate``.
    """
    if isinstance(series, MultiChannelSeries):
        sos = _band_sos(low_hz, high_hz, order, series.rate)
        return series.with_samples(signal.sosfiltfilt(sos, series.samples, axis=-1))
    if rate is None:
        raise ValueError("rate is required for array input")
    sos = _band_sos(low_hz, high_hz, order, rate)
    return signal.sosfiltfilt(sos, np.asarray(series, dtype=np.float64), axis=-1)


def butterworth_gain(freq_hz, low_hz, high_hz, order, rate, zero_phase=True):
    """Analytic magnitude response of the digital Butterworth bandpass.

    Uses the prewarped bilinear-transform mapping: with ``w = tan(pi f / rate)``
    the lowpass prototype variable is
    ``lam = (w**2 - w_lo w_hi) / (w (w_hi - w_lo))`` and
    ``|H|**2 = 1 / (1 + lam**order)`` (``order`` = bandpass order = 2N).
    Forward-backward filtering squares the single-pass magnitude.
    """
    f = np.asarray(freq_hz, dtype=np.float64)
    w = np.tan(np.pi * f / rate)
    wl = math.tan(math.pi * low_hz / rate)
    wh = math.tan(math.pi * high_hz / rate)
    lam = (w * w - wl * wh) / (w * (wh - wl))
    power = 1.0 / (1.0 + lam ** (order))
    return power if zero_phase else np.sqrt(power)


def trim(series: MultiChannelSeries, seconds: float) -> MultiChannelSeries:
    """Drop ``seconds`` from both ends (filter transients)."""
    cut = int(round(seconds * series.rate))
    if cut == 0:
        return series
    if 2 * cut >= series.n_samples:
        raise ValueError("series too short to trim")
    return series.with_samples(series.samples[:, cut:-cut])


def preprocess(series: MultiChannelSeries, band=(1.0, 30.0), order=4, trim_seconds=2.0,
               use_csd=True) -> MultiChannelSeries:
    """Standardize, take the CSD (when a layout is present), bandpass and trim."""
    out = standardize(series)
    if use_csd and out.layout is not None:
        out = csd(out)
    if band is not None:
        out = bandpass(out, band[0], band[1], order)
    return trim(out, trim_seconds)


def default_delay(rate: float, f_max: float) -> int:
    """Quarter period of the fastest retained oscillation, in samples."""
    return max(1, int(round(rate / (4.0 * f_max))))


def delay_vectors(x, m: int, tau: int) -> np.ndarray:
    """All delay vectors ``(x_t, x_{t+tau}, ..., x_{t+(m-1)tau})`` as rows."""
    x = np.asarray(x, dtype=np.float64).ravel()
    count = x.size - (m - 1) * tau
    if count < 1:
        raise ValueError(
            f"insufficient length: T={x.size} < (m-1)*tau+1 = {(m - 1) * tau + 1}"
        )
    idx = np.arange(count)[:, None] + tau * np.arange(m)[None, :]
    return x[idx]


def delay_embed(x, config: EmbeddingConfig) -> PointCloud:
    """Delay embedding subsampled to every ``stride``-th vector from ``offset``."""
    v = delay_vectors(x, config.m, config.tau)[config.offset :: config.stride]
    if v.shape[0] == 0:
        raise ValueError("insufficient length: no vectors left after subsampling")
    return PointCloud(v, Boundary.HARD)


def stride_subsets(x, m: int, tau: int, stride: int) -> list:
    """The ``stride`` interleaved subsets of the embedding (offsets 0..stride-1)."""
    v = delay_vectors(x, m, tau)
    return [PointCloud(v[o::stride], Boundary.HARD) for o in range(stride) if o < v.shape[0]]


@dataclass(frozen=True)
class SpaceTimeSeparation:
    """Percentile contours of ``|v_{t+dt} - v_t|`` for ``dt = 1..dt_max``."""

    dt: np.ndarray
    percentiles: tuple
    contours: np.ndarray
    suggested_stride: int

    def reference_contour(self) -> np.ndarray:
        """The contour closest to the median, used for the stride suggestion."""
        j = int(np.argmin(np.abs(np.asarray(self.percentiles) - 50.0)))
        return self.contours[:, j]


def first_local_maximum(curve, rel_rise=0.05):
    """1-based position of the first local maximum of ``curve``.

    Only peaks whose prominence is at least ``rel_rise`` times the curve's
    maximum count, so sampling noise on a flat curve is ignored.  The search
    stops at the first missing (NaN) value.  Returns ``None`` when there is no
    such peak.
    """
    c = np.asarray(curve, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(c))
    c = c[: bad[0]] if bad.size else c
    if c.size < 3:
        return None
    peaks, _ = signal.find_peaks(c, prominence=rel_rise * np.max(np.abs(c)))
    return int(peaks[0]) + 1 if peaks.size else None


def space_time_separation(x, config: EmbeddingConfig, percentiles=(1, 25, 50), dt_max=50,
                          min_pairs=10, rel_rise=0.05) -> SpaceTimeSeparation:
    """Space-time separation contours of the delay embedding of ``x``.

    Cells with fewer than ``min_pairs`` vector pairs are NaN.  The suggested
    decorrelation stride is the first local maximum of the contour closest to
    the median (1 if there is none).
    """
    v = delay_vectors(x, config.m, config.tau)
    pct = tuple(float(p) for p in percentiles)
    if list(pct) != sorted(pct):
        raise ValueError("percentiles must be increasing")
    dts = np.arange(1, int(dt_max) + 1)
    table = np.full((dts.size, len(pct)), np.nan)
    for i, dt in enumerate(dts):
        if v.shape[0] - dt < min_pairs:
            continue
        dist = np.sqrt(np.sum((v[dt:] - v[:-dt]) ** 2, axis=1))
        table[i] = np.percentile(dist, pct)
    out = SpaceTimeSeparation(dts, pct, table, 1)
    peak = first_local_maximum(out.reference_contour(), rel_rise)
    return replace(out, suggested_stride=int(peak) if peak is not None else 1)


@dataclass(frozen=True)
class DimensionProfile:
    """mFSA estimate per embedding dimension, averaged over k and stride subsets."""

    m_values: np.ndarray
    estimates: np.ndarray
    per_k: np.ndarray = field(repr=False)
    saturation_m: int | None = None


def _mfsa_over_k(cloud, k_values):
    kmax = max(k_values)
    table = knn_table(cloud, 2 * kmax)
    out = []
    for k in k_values:
        vals = fsa_local(table.distances[:, k - 1], table.distances[:, 2 * k - 1])
        out.append(aggregate_median(vals).value)
    return np.asarray(out)


def dimension_profile(x, m_range, k_range=range(10, 21), tau=1, stride=1,
                      threshold=0.5) -> DimensionProfile:
    """mFSA of the delay embedding of ``x`` as a function of embedding dimension.

    For each ``m`` the estimate is averaged over ``k_range`` (inclusive as
    given) and over the ``stride`` interleaved subsets.  ``saturation_m`` is
    the first ``m`` whose estimate exceeds the previous one by less than
    ``threshold`` (``None`` if the estimate keeps growing).
    """
    m_values = np.asarray(list(m_range), dtype=int)
    k_values = [int(k) for k in k_range]
    per_k = np.empty((m_values.size, len(k_values)))
    for i, m in enumerate(m_values):
        subsets = stride_subsets(x, int(m), tau, stride)
        per_k[i] = np.mean([_mfsa_over_k(c, k_values) for c in subsets], axis=0)
    est = per_k.mean(axis=1)
    saturation = None
    for i in range(1, m_values.size):
        if est[i] - est[i - 1] < threshold:
            saturation = int(m_values[i])
            break
    return DimensionProfile(m_values, est, per_k, saturation)
