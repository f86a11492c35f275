"""Causal graph process estimation for multivariate time series.

Recovers a single shared causal DAG together with lag-polynomial
coefficients from stationary non-Gaussian series, and ships the
simulators, a VAR-based baseline, evaluation metrics and a Monte-Carlo
benchmark CLI used to exercise the estimator.
"""

from .bench import (
    ExperimentSpec,
    OrderSelectionSpec,
    run_experiment,
    run_order_selection,
)
from .exceptions import (
    CgpLingamError,
    ConvergenceError,
    DegenerateInputError,
    DivergenceError,
    IdentifiabilityError,
    NonGaussianityWarning,
    UnstableProcessError,
)
from .graphs import (
    DagMatrix,
    PolyCoeffs,
    commutator_norm,
    graph_polynomial,
    is_dag,
    kron_vec_apply,
    spectral_radius,
    unvec,
    vec,
)
from .lingam import LingamResult, find_causal_order, lingam_fit
from .metrics import Metrics, compute_metrics, err_c, rmse_a, shd, snr_a
from .pipeline import (
    FitConfig,
    FitReport,
    LagFilterSet,
    fit,
    load_report,
    save_report,
    select_order,
    var_lingam_baseline,
)
from .solvers import (
    KERNEL_BACKEND,
    GramLasso,
    LassoProblem,
    LassoResult,
    lasso,
    pinv_solve,
)
from .synth import (
    GenConfig,
    GroundTruth,
    TimeSeries,
    load_bundle,
    make_ground_truth,
    save_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "CgpLingamError",
    "ConvergenceError",
    "DegenerateInputError",
    "DivergenceError",
    "IdentifiabilityError",
    "NonGaussianityWarning",
    "UnstableProcessError",
    "DagMatrix",
    "PolyCoeffs",
    "commutator_norm",
    "graph_polynomial",
    "is_dag",
    "kron_vec_apply",
    "spectral_radius",
    "unvec",
    "vec",
    "KERNEL_BACKEND",
    "GramLasso",
    "LassoProblem",
    "LassoResult",
    "lasso",
    "pinv_solve",
    "GenConfig",
    "GroundTruth",
    "TimeSeries",
    "make_ground_truth",
    "save_bundle",
    "load_bundle",
    "LingamResult",
    "find_causal_order",
    "lingam_fit",
    "FitConfig",
    "FitReport",
    "LagFilterSet",
    "fit",
    "select_order",
    "var_lingam_baseline",
    "save_report",
    "load_report",
    "Metrics",
    "compute_metrics",
    "snr_a",
    "err_c",
    "rmse_a",
    "shd",
    "ExperimentSpec",
    "OrderSelectionSpec",
    "run_experiment",
    "run_order_selection",
    "__version__",
]
