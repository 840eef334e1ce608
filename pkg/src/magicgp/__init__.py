"""Joint imputation and classification of sparse, misaligned time series.

A hierarchical multi-task Gaussian process couples class-level mean
trajectories with per-sample deviations; a functional logistic regression on
basis-projected curves supplies the label model. Training runs EM with
monotone block-coordinate maximization; prediction combines MAP
classification, class-conditional imputation, and logistic scoring. Two
baselines (independent single-GP and common-mean multi-task GP, each
followed by the same logistic stage), a synthetic benchmark, and evaluation
harnesses are included.
"""

from .basis import (
    BasisConfig,
    basis_eval,
    basis_quadrature,
    functional_covariate,
    open_uniform_basis,
    trapezoid_weights,
    weighted_double_integral,
)
from .baselines import BaselineModel, fit_mtgp, fit_sgp
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DegenerateLabelsError,
    DomainError,
    IngestError,
    InvalidParameterError,
    MagicError,
    MetricError,
    NumericalError,
    OptimizerFailure,
    SingularMatrixError,
    UnsupportedVersionError,
)
from .estimators import MagicClassifier, MtgpClassifier, SgpClassifier
from .evaluate import (
    BenchmarkReport,
    BenchmarkRow,
    EvalProtocol,
    MethodSettings,
    auc,
    imputation_mse,
    run_benchmark,
    run_loocv,
    stratified_split,
)
from .gp import GaussianOnGrid, conditional_from_joint, sgp_posterior
from .io import (
    RunConfig,
    ingest_long_csv,
    load_model,
    read_report,
    save_model,
    write_report,
)
from .kernels import KernelParams, rbf_kernel_matrix
from .logistic import LogisticCoefficients, fit_flr, flr_prob
from .model import (
    ClassPosterior,
    EMState,
    HyperBounds,
    ModelParams,
    RoughnessPenalty,
    TaylorMoments,
    build_roughness,
    compute_moments,
    e_step,
    em_objective,
    fit,
    label_likelihood,
    m_step,
    q_function,
    taylor_label_term,
)
from .optimize import bounded_quasi_newton
from .predict import (
    ClassPrior,
    MagicModel,
    PredictionResult,
    class_marginal,
    impute_new,
    map_classify,
    meta_combine,
    predict_prob,
    predict_sample,
)
from .series import SampleSeries
from .simulate import SimConfig, SimTruth, apply_missingness, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BasisConfig", "basis_eval", "basis_quadrature", "functional_covariate",
    "open_uniform_basis", "trapezoid_weights", "weighted_double_integral",
    "BaselineModel", "fit_mtgp", "fit_sgp",
    "CheckpointError", "ConfigError", "DataError", "DegenerateLabelsError",
    "DomainError", "IngestError", "InvalidParameterError", "MagicError",
    "MetricError", "NumericalError", "OptimizerFailure", "SingularMatrixError",
    "UnsupportedVersionError",
    "MagicClassifier", "MtgpClassifier", "SgpClassifier",
    "BenchmarkReport", "BenchmarkRow", "EvalProtocol", "MethodSettings",
    "auc", "imputation_mse", "run_benchmark", "run_loocv", "stratified_split",
    "GaussianOnGrid", "conditional_from_joint", "sgp_posterior",
    "RunConfig", "ingest_long_csv", "load_model", "read_report", "save_model",
    "write_report",
    "KernelParams", "rbf_kernel_matrix",
    "LogisticCoefficients", "fit_flr", "flr_prob",
    "ClassPosterior", "EMState", "HyperBounds", "ModelParams",
    "RoughnessPenalty", "TaylorMoments", "build_roughness", "compute_moments",
    "e_step", "em_objective", "fit", "label_likelihood", "m_step",
    "q_function", "taylor_label_term",
    "bounded_quasi_newton",
    "ClassPrior", "MagicModel", "PredictionResult", "class_marginal",
    "impute_new", "map_classify", "meta_combine", "predict_prob",
    "predict_sample",
    "SampleSeries",
    "SimConfig", "SimTruth", "apply_missingness", "generate_dataset",
    "__version__",
]
