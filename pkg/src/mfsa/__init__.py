"""Manifold-adaptive (FSA) intrinsic dimension estimation.

The local estimate ``ln 2 / ln(R_2k / R_k)`` has a known distribution under a
locally uniform density whose median is exactly the intrinsic dimension.  The
package provides the estimators (median, mean, mode, maximum likelihood), the
analytic distributions, a hypercube-calibrated correction, synthetic
benchmarks and a time-series embedding pipeline.
"""

__version__ = "0.1.0"

from .calibration import CalibrationModel, apply_correction, calibrate, integer_mode
from .distributions import (
    FsaDistribution,
    MedianSamplingDistribution,
    fsa_cdf,
    fsa_pdf,
    fsa_quantile,
    median_sampling_pdf,
)
from .estimators import (
    GlobalEstimate,
    LocalEstimateSet,
    aggregate_mean,
    aggregate_median,
    aggregate_mode,
    estimate,
    fsa_local,
    fsa_ml_solve,
    levina_bickel,
    local_estimates,
)
from .geometry import Boundary, PointCloud, distance, knn, knn_table
from .synthdata import ManifoldSpec, generate

__all__ = [
    "Boundary",
    "CalibrationModel",
    "FsaDistribution",
    "GlobalEstimate",
    "LocalEstimateSet",
    "ManifoldSpec",
    "MedianSamplingDistribution",
    "PointCloud",
    "aggregate_mean",
    "aggregate_median",
    "aggregate_mode",
    "apply_correction",
    "calibrate",
    "distance",
    "estimate",
    "fsa_cdf",
    "fsa_local",
    "fsa_ml_solve",
    "fsa_pdf",
    "fsa_quantile",
    "generate",
    "integer_mode",
    "knn",
    "knn_table",
    "levina_bickel",
    "local_estimates",
    "median_sampling_pdf",
]
