"""Approximate path following for sparse nonconvex penalized M-estimation."""
from .data_gen import ExperimentDesign, gen_elliptical_samples, gen_problem, make_rng
from .diagnostics import (
    GroundTruth,
    RecoveryMetrics,
    SparseEigReport,
    objective_gap_trace,
    oracle_estimator,
    recovery_metrics,
    sparse_eig_probe,
)
from .errors import ConfigurationError, LineSearchError
from .loss import (
    DesignData,
    Elliptical,
    EllipticalCov,
    LeastSquares,
    Logistic,
    lambda_zero,
    make_loss,
    objective,
)
from .path import PathConfig, PathResult, build_schedule, run_path
from .penalty import PenaltySpec, check_regularity
from .prox import line_search, prox_step, proximal_gradient, quad_approx, suboptimality
from .robust_stats import (
    CatoniConfig,
    catoni_location,
    catoni_scale,
    elliptical_cov,
    kendall_corr_matrix,
    kendall_tau,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentDesign",
    "gen_elliptical_samples",
    "gen_problem",
    "make_rng",
    "GroundTruth",
    "RecoveryMetrics",
    "SparseEigReport",
    "objective_gap_trace",
    "oracle_estimator",
    "recovery_metrics",
    "sparse_eig_probe",
    "ConfigurationError",
    "LineSearchError",
    "DesignData",
    "Elliptical",
    "EllipticalCov",
    "LeastSquares",
    "Logistic",
    "lambda_zero",
    "make_loss",
    "objective",
    "PathConfig",
    "PathResult",
    "build_schedule",
    "run_path",
    "PenaltySpec",
    "check_regularity",
    "line_search",
    "prox_step",
    "proximal_gradient",
    "quad_approx",
    "suboptimality",
    "CatoniConfig",
    "catoni_location",
    "catoni_scale",
    "elliptical_cov",
    "kendall_corr_matrix",
    "kendall_tau",
]
