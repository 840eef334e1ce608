"""Prediction for new sparse samples under a fitted hierarchical GP model.

A new sample is classified by comparing class-conditional marginal Gaussian
densities of its observed values (plus log class priors), imputed on the full
grid by conditioning the joint Gaussian of the assigned class, and scored by
the fitted functional logistic regression on the completed curve. Per-feature
probabilities can be averaged into a single meta probability.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisConfig, functional_covariate
from .errors import InvalidParameterError
from .gp import conditional_from_joint
from .kernels import rbf_kernel_matrix
from .linalg import chol_factor, logdet_from_chol, solve_from_chol
from .logistic import flr_prob
from .model import ClassPosterior, EMState, ModelParams
from .series import SampleSeries
from .validation import as_float_vector, check_grid, grid_indices

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ClassPrior:
    """Prior class probabilities (p0, p1), nonnegative and summing to one."""

    p0: float = 0.5
    p1: float = 0.5

    def __post_init__(self):
        p0, p1 = float(self.p0), float(self.p1)
        if not (np.isfinite(p0) and np.isfinite(p1)) or p0 < 0 or p1 < 0:
            raise InvalidParameterError(f"prior probabilities must be nonnegative, got ({p0}, {p1})")
        if abs(p0 + p1 - 1.0) > 1e-8:
            raise InvalidParameterError(f"prior probabilities must sum to 1, got {p0 + p1!r}")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)

    @classmethod
    def from_labels(cls, labels) -> "ClassPrior":
        labels = np.asarray(labels, dtype=int)
        if labels.size == 0:
            raise InvalidParameterError("cannot derive a class prior from zero labels")
        p1 = float(np.mean(labels == 1))
        return cls(1.0 - p1, p1)

    def log(self, z: int) -> float:
        p = self.p0 if z == 0 else self.p1
        with np.errstate(divide="ignore"):
            return float(np.log(p))


@dataclass(frozen=True)
class MagicModel:
    """Fitted model handle: parameters, class-mean posteriors, grid, basis,
    and class priors. This is what prediction operations and checkpoints
    consume."""

    params: ModelParams
    post0: ClassPosterior
    post1: ClassPosterior
    grid: np.ndarray = field(repr=False)
    basis: BasisConfig
    prior: ClassPrior = ClassPrior()

    def __post_init__(self):
        object.__setattr__(self, "grid", check_grid(self.grid))
        for name in ("post0", "post1"):
            post = getattr(self, name)
            if post.size != self.grid.size:
                raise InvalidParameterError(
                    f"{name} has size {post.size}, expected grid size {self.grid.size}"
                )

    @classmethod
    def from_state(cls, state: EMState, grid, basis: BasisConfig,
                   prior: ClassPrior | None = None, labels=None) -> "MagicModel":
        if prior is None:
            prior = ClassPrior.from_labels(labels) if labels is not None else ClassPrior()
        return cls(
            params=state.params,
            post0=state.posteriors[0],
            post1=state.posteriors[1],
            grid=grid,
            basis=basis,
            prior=prior,
        )

    def posterior(self, z: int) -> ClassPosterior:
        return self.post0 if z == 0 else self.post1

    def deviation_cov(self) -> np.ndarray:
        """Class-independent part of a new sample's covariance: the
        individual-deviation kernel on the grid plus observation noise on the
        diagonal. Adding a class's posterior covariance gives that class's
        full joint covariance."""
        n = self.grid.size
        return rbf_kernel_matrix(self.params.theta, self.grid) + self.params.sigma2 * np.eye(n)


@dataclass(frozen=True)
class PredictionResult:
    """Full per-sample prediction: MAP class, the two class log-scores,
    logistic probability, and the class-conditional completed curve with
    per-point posterior variance (zero at observed points)."""

    sample_id: str
    assigned_class: int
    map_log_scores: tuple
    probability: float
    curve: np.ndarray = field(repr=False)
    variance: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.assigned_class not in (0, 1):
            raise InvalidParameterError(f"assigned class must be 0 or 1, got {self.assigned_class!r}")
        if not (0.0 <= self.probability <= 1.0):
            raise InvalidParameterError(f"probability must lie in [0,1], got {self.probability!r}")
        curve = as_float_vector(self.curve, "curve")
        variance = as_float_vector(self.variance, "variance")
        if np.any(variance < 0):
            raise InvalidParameterError("variance entries must be nonnegative")
        object.__setattr__(self, "curve", curve)
        object.__setattr__(self, "variance", variance)


def _observed_indices(new: SampleSeries, grid) -> np.ndarray:
    return grid_indices(new.times, grid)


def class_marginal(new: SampleSeries, z: int, model: MagicModel) -> float:
    """Log marginal density of the sample's observed values under class z.

    The observed vector is Gaussian with mean given by the class-mean
    posterior mean and covariance (posterior covariance + deviation kernel +
    noise), all restricted to the observed grid indices. Zero observations
    return 0.0 (zero-dimensional Gaussian) with a warning.
    """
    if z not in (0, 1):
        raise InvalidParameterError(f"class must be 0 or 1, got {z!r}")
    obs = _observed_indices(new, model.grid)
    if obs.size == 0:
        warnings.warn(
            f"sample {new.id!r} has no observations; class marginal is 0", RuntimeWarning
        )
        return 0.0
    post = model.posterior(z)
    sigma = (post.cov + model.deviation_cov())[np.ix_(obs, obs)]
    resid = new.values - post.mean[obs]
    low, _ = chol_factor(sigma)
    quad = float(resid @ solve_from_chol(low, resid))
    logdet = float(logdet_from_chol(low))
    return -0.5 * (obs.size * LOG_2PI + logdet + quad)


def map_classify(new: SampleSeries, model: MagicModel,
                 prior: ClassPrior | None = None):
    """MAP class and the two log-scores (marginal + log prior). Ties go to 0."""
    prior = prior if prior is not None else model.prior
    scores = tuple(class_marginal(new, z, model) + prior.log(z) for z in (0, 1))
    assigned = 0 if scores[0] >= scores[1] else 1
    return assigned, scores


def impute_new(new: SampleSeries, z: int, model: MagicModel):
    """Completed curve and per-point variance under class z.

    Conditions the joint Gaussian (class-mean posterior mean, posterior
    covariance + deviation kernel + noise) on the observed entries. Observed
    points pass through exactly with zero variance; with no observations the
    prior mean and diagonal are returned.
    """
    if z not in (0, 1):
        raise InvalidParameterError(f"class must be 0 or 1, got {z!r}")
    obs = _observed_indices(new, model.grid)
    post = model.posterior(z)
    joint_cov = post.cov + model.deviation_cov()
    return conditional_from_joint(post.mean, joint_cov, obs, new.values)


def predict_prob(model: MagicModel, f_new, basis: BasisConfig | None = None) -> float:
    """Logistic probability of class 1 for a completed curve on the grid."""
    basis = basis if basis is not None else model.basis
    x = functional_covariate(f_new, model.grid, basis)
    return flr_prob(model.params.coeffs, x)


def meta_combine(probs) -> float:
    """Arithmetic mean of per-feature probabilities."""
    probs = np.asarray(list(probs), dtype=float)
    if probs.size == 0:
        raise InvalidParameterError("meta_combine needs at least one probability")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
        raise InvalidParameterError("probabilities must be finite and lie in [0,1]")
    return float(np.mean(probs))


def predict_sample(model: MagicModel, new: SampleSeries,
                   prior: ClassPrior | None = None) -> PredictionResult:
    """Full pipeline for one sample: MAP class, class-conditional imputation,
    and logistic probability on the completed curve."""
    assigned, scores = map_classify(new, model, prior)
    curve, variance = impute_new(new, assigned, model)
    prob = predict_prob(model, curve)
    return PredictionResult(
        sample_id=new.id,
        assigned_class=assigned,
        map_log_scores=scores,
        probability=prob,
        curve=curve,
        variance=variance,
    )
