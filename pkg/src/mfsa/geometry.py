"""Point clouds, boundary-aware distances and exact k-nearest-neighbor queries.

Every neighbor query in the package goes through :func:`knn_table`.  Whatever
backend generates candidate neighbors (brute force, a kd-tree, or a BLAS Gram
matrix), the final distances are recomputed with the same elementwise formula
used by :func:`distance` and sorted by ``(distance, index)``.  The result is
therefore bit-identical across backends, and ties are broken by point index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientSampleError

__all__ = [
    "Boundary",
    "PointCloud",
    "NeighborDistances",
    "KnnTable",
    "distance",
    "knn",
    "knn_table",
    "pairwise_distances",
]

# Bytes of scratch memory used per block of difference vectors.
_BLOCK_BYTES = 64 * 2**20


class Boundary(str, enum.Enum):
    """Boundary condition of the sampling domain."""

    HARD = "hard"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        value = str(value).lower()
        if value in ("periodic", "periodicunit", "circular", "torus"):
            return cls.PERIODIC
        if value == "hard":
            return cls.HARD
        raise ValueError(f"unknown boundary condition {value!r}")


@dataclass(frozen=True)
class PointCloud:
    """An immutable ``n x dim`` sample.

    Under :attr:`Boundary.PERIODIC` the points live on the unit torus, so every
    coordinate must lie in ``[0, 1)``.
    """

    points: np.ndarray
    boundary: Boundary = Boundary.HARD

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, order="C", copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty n x dim matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        boundary = Boundary.parse(self.boundary)
        if boundary is Boundary.PERIODIC and (pts.min() < 0.0 or pts.max() >= 1.0):
            raise ValueError("periodic clouds need every coordinate in [0, 1)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    def scaled(self, factor: float) -> "PointCloud":
        """Return a hard-boundary copy with every coordinate multiplied by ``factor``."""
        if self.periodic:
            raise ValueError("scaling a periodic cloud leaves the unit torus")
        return PointCloud(self.points * factor, Boundary.HARD)

    @classmethod
    def from_csv(cls, path, boundary=Boundary.HARD) -> "PointCloud":
        """Read a headerless CSV file with one point per row."""
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2, dtype=np.float64)
        return cls(data, boundary)

    def to_csv(self, path) -> None:
        np.savetxt(Path(path), self.points, delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class NeighborDistances:
    """Sorted neighbor distances ``R_1 <= ... <= R_K`` of a single query point."""

    query_index: int
    distances: np.ndarray
    indices: np.ndarray
    has_zero: bool = field(default=False)

    @property
    def K(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> np.ndarray:
        """Normalized distances ``R_k / R_K`` for ``k = 1..K``."""
        return self.distances / self.distances[-1]


@dataclass(frozen=True)
class KnnTable:
    """Neighbor distances and indices for every point of a cloud.

    ``distances[i, j]`` is the distance from point ``i`` to its ``j+1``-th
    nearest neighbor (the point itself excluded).
    """

    distances: np.ndarray
    indices: np.ndarray

    @property
    def n_zero(self) -> int:
        """Number of query points that have a duplicate at distance zero."""
        return int(np.count_nonzero(self.distances[:, 0] == 0.0))


def _sq_norm(diff, periodic):
    # One formula for every code path; keeps results bit-identical.
    if periodic:
        diff = np.abs(diff)
        diff = np.minimum(diff, 1.0 - diff)
    return np.sum(diff * diff, axis=-1)


def distance(a, b, boundary=Boundary.HARD) -> float:
    """Euclidean distance, with minimum-image wrap on the unit torus.

    >>> distance([0.1], [0.9], "periodic")
    0.19999999999999996
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    periodic = Boundary.parse(boundary) is Boundary.PERIODIC
    diff = (b - a)[None, :]
    sq = _sq_norm(diff, periodic)[0]
    if sq < np.finfo(np.float64).tiny:
        # squares underflow below ~1e-154; rescale so distinct points stay apart
        wrapped = np.abs(diff[0])
        if periodic:
            wrapped = np.minimum(wrapped, 1.0 - wrapped)
        scale = wrapped.max()
        if scale == 0.0:
            return 0.0
        return float(scale * np.sqrt(_sq_norm((wrapped / scale)[None, :], False)[0]))
    return float(np.sqrt(sq))


def pairwise_distances(cloud: PointCloud) -> np.ndarray:
    """Full ``n x n`` distance matrix (reference implementation for small clouds)."""
    pts = cloud.points
    out = np.empty((cloud.n, cloud.n))
    for i in range(cloud.n):
        out[i] = np.sqrt(_sq_norm(pts - pts[i], cloud.periodic))
    return out


def _block_rows(n_cols, dim):
    return max(1, _BLOCK_BYTES // (8 * max(1, n_cols) * max(1, dim)))


def _exact_sq(pts, rows, cand, periodic):
    """Exact squared distances from ``pts[rows]`` to ``pts[cand]`` (cand: rows x c)."""
    diff = pts[cand] - pts[rows][:, None, :]
    return _sq_norm(diff, periodic)


def _finalize(pts, rows, cand, bound_sq, K, periodic, slack):
    """Recompute candidate distances exactly, sort by (distance, index), take K.

    Returns the sorted squared distances, indices and a mask of rows whose
    candidate set could not be proven to contain the true K nearest neighbors.
    """
    sq = _exact_sq(pts, rows, cand, periodic)
    sq[cand == rows[:, None]] = np.inf
    order = np.lexsort((cand, sq), axis=-1)[:, :K]
    sq = np.take_along_axis(sq, order, axis=-1)
    idx = np.take_along_axis(cand, order, axis=-1)
    bad = ~(sq[:, -1] * (1.0 + slack) < bound_sq)
    return sq, idx, bad


def _full_row(pts, i, K, periodic):
    sq = _sq_norm(pts - pts[i], periodic)
    sq[i] = np.inf
    order = np.lexsort((np.arange(len(sq)), sq))[:K]
    return sq[order], order


def _candidates_brute(pts, rows, c, periodic):
    sq = _sq_norm(pts[None, :, :] - pts[rows][:, None, :], periodic)
    sq[np.arange(len(rows)), rows] = np.inf
    if c >= pts.shape[0] - 1:
        cand = np.broadcast_to(np.arange(pts.shape[0]), sq.shape).copy()
        return cand, np.full(len(rows), np.inf)
    part = np.argpartition(sq, c, axis=-1)
    cand = part[:, :c]
    bound = np.take_along_axis(sq, part[:, c : c + 1], axis=-1)[:, 0]
    return cand, bound


def _candidates_gram(pts, norms, rows, c):
    # Squared distances from the Gram matrix; only used to pick candidates.
    sq = norms[rows][:, None] + norms[None, :] - 2.0 * (pts[rows] @ pts.T)
    sq[np.arange(len(rows)), rows] = np.inf
    if c >= pts.shape[0] - 1:
        cand = np.broadcast_to(np.arange(pts.shape[0]), sq.shape).copy()
        return cand, np.full(len(rows), np.inf)
    part = np.argpartition(sq, c, axis=-1)
    cand = part[:, :c]
    bound = np.take_along_axis(sq, part[:, c : c + 1], axis=-1)[:, 0]
    # Rounding error of the expansion is bounded by a few ulps of the norms.
    err = 1e-10 * (norms[rows] + norms.max()) + 1e-300
    return cand, np.maximum(bound - err, 0.0)


def _choose_method(cloud, K):
    if cloud.n <= 256:
        return "brute"
    if cloud.periodic:
        return "tree" if cloud.dim <= 16 else "brute"
    return "tree" if cloud.dim <= 8 else "gram"


def knn_table(cloud: PointCloud, K: int, method: str = "auto") -> KnnTable:
    """Exact ``K`` nearest neighbors of every point, excluding the point itself.

    Parameters
    ----------
    cloud : PointCloud
    K : int
        Neighborhood size, ``1 <= K <= n - 1``.
    method : {"auto", "brute", "tree", "gram"}
        Candidate generator.  All methods return bit-identical output; the
        brute-force scan is the reference.  ``"gram"`` is hard-boundary only.

    Returns
    -------
    KnnTable
        ``distances`` and ``indices`` of shape ``(n, K)``, each row ordered by
        ascending distance with ties broken by lower point index.
    """
    n = cloud.n
    K = int(K)
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > n - 1:
        raise InsufficientSampleError(f"K={K} neighbors requested from a cloud of n={n} points")
    if method == "auto":
        method = _choose_method(cloud, K)
    if method == "gram" and cloud.periodic:
        raise ValueError("the Gram backend does not support periodic boundaries")

    pts = cloud.points
    periodic = cloud.periodic
    c = min(n - 1, K + max(8, K // 4))
    out_sq = np.empty((n, K))
    out_idx = np.empty((n, K), dtype=np.intp)
    bad_rows = []

    if method == "tree":
        tree = cKDTree(pts, boxsize=1.0 if periodic else None)
        n_query = min(n, c + 1)
        block = _block_rows(n_query, cloud.dim)
        for start in range(0, n, block):
            rows = np.arange(start, min(n, start + block))
            tree_d, cand = tree.query(pts[rows], k=n_query)
            cand = np.asarray(cand, dtype=np.intp).reshape(len(rows), n_query)
            tree_d = np.asarray(tree_d).reshape(len(rows), n_query)
            if n_query >= n:
                bound = np.full(len(rows), np.inf)
            else:
                bound = tree_d[:, -1] ** 2
            sq, idx, bad = _finalize(pts, rows, cand, bound, K, periodic, 1e-9)
            out_sq[rows], out_idx[rows] = sq, idx
            bad_rows.extend(rows[bad])
    elif method in ("brute", "gram"):
        norms = np.einsum("ij,ij->i", pts, pts) if method == "gram" else None
        block = _block_rows(n, cloud.dim if method == "brute" else 1)
        for start in range(0, n, block):
            rows = np.arange(start, min(n, start + block))
            if method == "brute":
                cand, bound = _candidates_brute(pts, rows, c, periodic)
                slack = 0.0
            else:
                cand, bound = _candidates_gram(pts, norms, rows, c)
                slack = 1e-9
            sq, idx, bad = _finalize(pts, rows, cand, bound, K, periodic, slack)
            out_sq[rows], out_idx[rows] = sq, idx
            bad_rows.extend(rows[bad])
    else:
        raise ValueError(f"unknown knn method {method!r}")

    for i in bad_rows:
        out_sq[i], out_idx[i] = _full_row(pts, i, K, periodic)

    return KnnTable(np.sqrt(out_sq), out_idx)


def knn(cloud: PointCloud, query_index: int, K: int) -> NeighborDistances:
    """Sorted distances from one point to its ``K`` nearest other points."""
    n = cloud.n
    if not 0 <= query_index < n:
        raise IndexError(f"query index {query_index} out of range for n={n}")
    if K > n - 1:
        raise InsufficientSampleError(f"K={K} neighbors requested from a cloud of n={n} points")
    sq, idx = _full_row(cloud.points, query_index, K, cloud.periodic)
    dist = np.sqrt(sq)
    return NeighborDistances(query_index, dist, idx, bool(dist[0] == 0.0))
