"""Reproducible synthetic manifolds for calibration and benchmarking.

Randomness comes from numpy's PCG64 bit generator seeded through a
``SeedSequence``.  Both are fixed algorithms, so a given ``(spec, seed)``
produces the same cloud on every platform.  Independent streams for parallel
tasks are keyed by tuples, e.g. ``rng_for(seed, D, realization)``.

Families
--------
hypercube
    i.i.d. uniform on ``[0, 1)^D``; the only family that supports the periodic
    (unit torus) boundary.
sphere
    uniform on the unit sphere ``S^D`` in ``R^(D+1)`` (normalized Gaussians).
swissroll
    ``(t cos t, h, t sin t)`` with ``t = 1.5 pi (1 + 2u)``, ``h = 21 v``.
linear
    a uniform ``D``-cube padded with zeros and rotated by a seeded random
    orthogonal matrix.
helix
    closed curve ``((2 + cos 8t) cos t, (2 + cos 8t) sin t, sin 8t)``,
    ``t`` uniform on ``[0, 2 pi)``.
nonlinear
    graph of a smooth map over the cube, ``x = (u, 0.5 sin(pi W u + phi))``
    with seeded ``W`` and ``phi``; a diffeomorphism of the cube onto its image.

Any family may ask for extra ambient coordinates; they are zero-padded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import FsaDistribution
from .estimators import LocalEstimateSet
from .geometry import Boundary, PointCloud

__all__ = [
    "FAMILIES",
    "ManifoldSpec",
    "rng_for",
    "generate",
    "hypercube",
    "random_orthogonal",
    "sample_fsa_locals",
]

FAMILIES = ("hypercube", "sphere", "swissroll", "linear", "helix", "nonlinear")

_ALIASES = {
    "hypercubeuniform": "hypercube",
    "cube": "hypercube",
    "hyperspheresurface": "sphere",
    "hypersphere": "sphere",
    "swiss_roll": "swissroll",
    "linearsubspace": "linear",
    "helix1d": "helix",
    "nonlinearembedhypercube": "nonlinear",
}

# Families with a fixed intrinsic dimension, and their minimal ambient dimension.
_FIXED_DIM = {"swissroll": (2, 3), "helix": (1, 3)}


def rng_for(*keys) -> np.random.Generator:
    """PCG64 generator keyed by non-negative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


@dataclass(frozen=True)
class ManifoldSpec:
    """What to sample: family, dimensions, sample size, seed."""

    family: str
    intrinsic_d: int
    n: int
    seed: int = 0
    ambient_d: int | None = None
    boundary: Boundary = Boundary.HARD
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        family = _ALIASES.get(str(self.family).lower(), str(self.family).lower())
        if family not in FAMILIES:
            raise ValueError(f"unknown manifold family {self.family!r}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "boundary", Boundary.parse(self.boundary))
        D = int(self.intrinsic_d)
        if D < 1:
            raise ValueError("intrinsic dimension must be at least 1")
        if family in _FIXED_DIM and D != _FIXED_DIM[family][0]:
            raise ValueError(f"{family} has intrinsic dimension {_FIXED_DIM[family][0]}")
        amb = self.ambient_d if self.ambient_d is not None else _default_ambient(family, D)
        amb = int(amb)
        if amb < D:
            raise ValueError(f"intrinsic dimension {D} exceeds ambient dimension {amb}")
        if amb < _min_ambient(family, D):
            raise ValueError(f"{family} with D={D} needs at least {_min_ambient(family, D)} ambient coordinates")
        if self.boundary is Boundary.PERIODIC and (family != "hypercube" or amb != D):
            raise ValueError("only a hypercube with ambient_d == intrinsic_d can be periodic")
        if int(self.n) < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "intrinsic_d", D)
        object.__setattr__(self, "ambient_d", amb)
        object.__setattr__(self, "n", int(self.n))

    def with_seed(self, seed) -> "ManifoldSpec":
        return replace(self, seed=seed)

    def to_dict(self):
        return {
            "family": self.family,
            "intrinsic_d": self.intrinsic_d,
            "ambient_d": self.ambient_d,
            "n": self.n,
            "seed": self.seed,
            "boundary": self.boundary.value,
            "params": dict(self.params),
        }


def _default_ambient(family, D):
    if family in _FIXED_DIM:
        return _FIXED_DIM[family][1]
    if family == "sphere":
        return D + 1
    if family == "nonlinear":
        return 2 * D
    return D


def _min_ambient(family, D):
    if family in _FIXED_DIM:
        return _FIXED_DIM[family][1]
    if family in ("sphere", "nonlinear"):
        return D + 1
    return D


def _pad(x, ambient):
    if x.shape[1] == ambient:
        return x
    out = np.zeros((x.shape[0], ambient))
    out[:, : x.shape[1]] = x
    return out


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def hypercube(n: int, D: int, rng, boundary=Boundary.HARD) -> PointCloud:
    """Uniform sample of the unit ``D``-cube."""
    rng = rng if isinstance(rng, np.random.Generator) else rng_for(rng)
    return PointCloud(rng.random((n, D)), boundary)


def generate(spec: ManifoldSpec) -> PointCloud:
    """Sample the manifold described by ``spec``."""
    rng = rng_for(spec.seed) if np.ndim(spec.seed) == 0 else rng_for(*spec.seed)
    n, D, amb = spec.n, spec.intrinsic_d, spec.ambient_d
    fam = spec.family
    if fam == "hypercube":
        x = rng.random((n, D))
        if spec.boundary is Boundary.PERIODIC:
            return PointCloud(x, Boundary.PERIODIC)
    elif fam == "sphere":
        g = rng.standard_normal((n, D + 1))
        x = g / np.linalg.norm(g, axis=1, keepdims=True)
    elif fam == "swissroll":
        u = rng.random((n, 2))
        t = 1.5 * np.pi * (1.0 + 2.0 * u[:, 0])
        x = np.column_stack([t * np.cos(t), 21.0 * u[:, 1], t * np.sin(t)])
    elif fam == "helix":
        t = 2.0 * np.pi * rng.random(n)
        rad = 2.0 + np.cos(8.0 * t)
        x = np.column_stack([rad * np.cos(t), rad * np.sin(t), np.sin(8.0 * t)])
    elif fam == "linear":
        cube = _pad(rng.random((n, D)), amb)
        return PointCloud(cube @ random_orthogonal(amb, rng).T, Boundary.HARD)
    elif fam == "nonlinear":
        u = rng.random((n, D))
        extra = amb - D
        W = rng.standard_normal((D, extra)) / np.sqrt(D)
        phase = 2.0 * np.pi * rng.random(extra)
        scale = float(spec.params.get("amplitude", 0.5))
        x = np.column_stack([u, scale * np.sin(np.pi * (u @ W) + phase)])
    else:  # pragma: no cover - rejected in ManifoldSpec
        raise ValueError(fam)
    return PointCloud(_pad(x, amb), Boundary.HARD)


def sample_fsa_locals(D: float, k: int, n: int, seed=0) -> LocalEstimateSet:
    """``n`` i.i.d. local estimates drawn from their analytic distribution."""
    rng = rng_for(seed) if np.ndim(seed) == 0 else rng_for(*seed)
    return LocalEstimateSet(k, FsaDistribution(k, D).rvs(n, rng))
