"""Comparison pipelines: single-GP and common-mean multi-task GP, each
followed by the same functional logistic regression.

* SGP: one shared (kernel, noise) pair maximizing the summed per-sample GP
  marginal log-likelihoods with a fixed (default zero) prior mean; each
  sample is completed independently from its own observations.
* MTGP: the hierarchical EM machinery with a single latent mean common to
  all samples, no label terms, and no curvature penalty unless configured;
  samples are completed from the common-mean posterior.

Both use the identical basis and ridge penalty as the main classifier when
fitting the logistic stage on completed curves.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass, field, replace

from .basis import BasisConfig, functional_covariate, open_uniform_basis
from .errors import DataError, DegenerateLabelsError, InvalidParameterError, OptimizerFailure
from .gp import conditional_from_joint, sgp_posterior
from .kernels import KernelParams, rbf_kernel_matrix
from .logistic import LogisticCoefficients, fit_flr, flr_prob
from .model import (
    DEFAULT_LAMBDA,
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    DEFAULT_NUM_BASIS,
    ClassPosterior,
    HyperBounds,
    build_roughness,
    _entropy_term,
    _group_posterior,
    _initial_params,
    _Layout,
    _NoiseCache,
    _prior_term,
    _roughness_expectation,
    _series_sum,
    _update_kernel_block,
    _update_noise_block,
    _as_grid_mean,
)
from .optimize import bounded_quasi_newton
from .series import SampleSeries
from .validation import check_grid, grid_indices

SGP_KIND = "sgp"
MTGP_KIND = "mtgp"


@dataclass(frozen=True)
class BaselineModel:
    """A fitted baseline: kind-specific GP stage plus logistic coefficients.

    SGP carries (kernel, sigma2) shared across samples, or per-sample values
    when hyperparameter sharing is disabled. MTGP carries the common-mean
    posterior and its mean kernel in addition to (kernel, sigma2).
    """

    kind: str
    kernel: KernelParams
    sigma2: float
    coeffs: LogisticCoefficients
    grid: np.ndarray = field(repr=False)
    basis: BasisConfig
    prior_mean: np.ndarray = field(repr=False)
    mean_kernel: KernelParams | None = None
    mean_post: ClassPosterior | None = None
    per_sample: dict | None = None
    q_history: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", check_grid(self.grid))
        object.__setattr__(
            self, "prior_mean", np.asarray(self.prior_mean, dtype=float).reshape(-1)
        )
        if self.prior_mean.size != self.grid.size:
            raise InvalidParameterError("prior mean length does not match grid")
        if self.kind == SGP_KIND:
            if self.mean_post is not None or self.mean_kernel is not None:
                raise InvalidParameterError("single-GP baseline carries no common-mean fields")
        elif self.kind == MTGP_KIND:
            if self.mean_post is None or self.mean_kernel is None:
                raise InvalidParameterError("common-mean baseline requires posterior and kernel")
            if self.per_sample is not None:
                raise InvalidParameterError("common-mean baseline shares hyperparameters")
        else:
            raise InvalidParameterError(f"unknown baseline kind {self.kind!r}")

    def sample_hyperparams(self, sample_id) -> tuple:
        if self.per_sample is not None:
            try:
                return self.per_sample[sample_id]
            except KeyError:
                raise DataError(
                    f"no stored hyperparameters for sample {sample_id!r}; "
                    "refit with shared hyperparameters to score new samples"
                ) from None
        return self.kernel, self.sigma2

    def impute(self, sample: SampleSeries):
        """Completed curve and per-point variance on the full grid; observed
        values pass through exactly with zero variance."""
        obs = grid_indices(sample.times, self.grid)
        if self.kind == SGP_KIND:
            kern, s2 = self.sample_hyperparams(sample.id)
            prior = self.prior_mean

            def mean_fn(t):
                return np.interp(np.asarray(t, dtype=float), self.grid, prior)

            post = sgp_posterior(sample.times, sample.values, self.grid, mean_fn, kern, s2)
            curve = post.mean.copy()
            var = np.diag(post.cov).copy()
            curve[obs] = sample.values
            var[obs] = 0.0
            return curve, var
        joint_cov = (
            self.mean_post.cov
            + rbf_kernel_matrix(self.kernel, self.grid)
            + self.sigma2 * np.eye(self.grid.size)
        )
        return conditional_from_joint(self.mean_post.mean, joint_cov, obs, sample.values)

    def predict_proba_sample(self, sample: SampleSeries) -> float:
        curve, _ = self.impute(sample)
        return flr_prob(self.coeffs, functional_covariate(curve, self.grid, self.basis))


def _marginal_objective(layout, prior_mean, smooth):
    """Summed per-sample GP marginal log-likelihood (constants dropped)."""

    def objective(x):
        kern = KernelParams(x[0], x[1])
        noise = _NoiseCache(layout, kern, float(x[2]), smooth=smooth)
        total = 0.0
        for grp, ainv, logdet in zip(layout.groups, noise.ainv, noise.logdet):
            if grp.k == 0:
                continue
            r = grp.y - prior_mean[grp.idx]
            quad = np.einsum("gi,gij,gj->g", r, ainv, r)
            total += -0.5 * float((logdet + quad).sum())
        return total

    return objective


def _logistic_stage(layout, model_impute, basis, lam):
    """Complete every training curve, then fit the logistic stage."""
    labels = layout.labels
    if np.any(labels < 0):
        raise DataError("every training sample needs a 0/1 label")
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise DegenerateLabelsError("training data must contain both classes")
    covariates = np.stack(
        [
            functional_covariate(model_impute(s)[0], layout.grid, basis)
            for s in layout.samples
        ]
    )
    return fit_flr(covariates, labels, lam)


def fit_sgp(samples, grid, basis: BasisConfig | None = None, lam: float = DEFAULT_LAMBDA, *,
            bounds: HyperBounds | None = None, prior_mean=None,
            share_hyperparams: bool = True) -> BaselineModel:
    """Single-GP baseline: shared-hyperparameter MLE, per-sample completion,
    then functional logistic regression on the completed curves.

    With ``share_hyperparams=False`` each sample gets its own (kernel, noise)
    MLE; this departs from the default shared fit and is noticeably less
    stable on sparse samples.
    """
    layout = _Layout(samples, grid)
    grid = layout.grid
    if basis is None:
        basis = open_uniform_basis(DEFAULT_NUM_BASIS, grid[0], grid[-1])
    bounds = bounds or HyperBounds()
    prior_vec = _as_grid_mean(prior_mean, grid, "prior_mean")
    init = _initial_params(layout, prior_vec, prior_vec, bounds)
    x0 = np.array([init.theta.amplitude, init.theta.length_scale, init.sigma2])
    flags = []

    per_sample = None
    if share_hyperparams:
        objective = _marginal_objective(layout, prior_vec, smooth=True)
        try:
            x_new, _, info = bounded_quasi_newton(objective, x0, bounds.kernel_noise_box())
            if not info.get("converged", False):
                flags.append(f"marginal-likelihood optimizer: {info.get('message', '')}")
        except OptimizerFailure as exc:
            flags.append(f"marginal-likelihood optimizer failed ({exc}); kept initialization")
            x_new = x0
        kernel = KernelParams(x_new[0], x_new[1])
        sigma2 = float(x_new[2])
    else:
        kernel = init.theta
        sigma2 = init.sigma2
        per_sample = {}
        for s in layout.samples:
            sub = _Layout([s], grid)
            objective = _marginal_objective(sub, prior_vec, smooth=True)
            try:
                x_new, _, _ = bounded_quasi_newton(objective, x0, bounds.kernel_noise_box())
            except OptimizerFailure as exc:
                flags.append(f"sample {s.id!r} hyperparameter fit failed ({exc}); kept initialization")
                x_new = x0
            per_sample[s.id] = (KernelParams(x_new[0], x_new[1]), float(x_new[2]))

    partial = BaselineModel(
        kind=SGP_KIND,
        kernel=kernel,
        sigma2=sigma2,
        coeffs=LogisticCoefficients(0.0, np.zeros(basis.num_basis)),
        grid=grid,
        basis=basis,
        prior_mean=prior_vec,
        per_sample=per_sample,
        flags=flags,
    )
    coeffs = _logistic_stage(layout, partial.impute, basis, lam)
    return replace(partial, coeffs=coeffs)


def fit_mtgp(samples, grid, basis: BasisConfig | None = None, lam: float = DEFAULT_LAMBDA, *,
             roughness_weight: float = 0.0, bounds: HyperBounds | None = None,
             prior_mean=None, epsilon: float = DEFAULT_EPSILON,
             max_iters: int = DEFAULT_MAX_ITERS) -> BaselineModel:
    """Common-mean multi-task baseline.

    Runs the hierarchical EM with one latent mean shared by every sample and
    no label terms: the E-step computes the common-mean posterior, the M-step
    alternates the mean-kernel block and the (kernel, noise) block, each under
    the same exact-evaluation monotone acceptance as the main model. The
    curvature penalty is off unless ``roughness_weight`` is positive.
    """
    layout = _Layout(samples, grid)
    grid = layout.grid
    if basis is None:
        basis = open_uniform_basis(DEFAULT_NUM_BASIS, grid[0], grid[-1])
    bounds = bounds or HyperBounds()
    if epsilon <= 0 or max_iters < 1:
        raise InvalidParameterError("epsilon must be positive and max_iters at least 1")
    prior_vec = _as_grid_mean(prior_mean, grid, "prior_mean")
    penalty = build_roughness(grid, roughness_weight) if roughness_weight > 0 else None
    rmat = penalty.rmat if penalty is not None else None
    all_mask = np.ones(layout.n_samples, dtype=bool)
    flags: list = []

    init = _initial_params(layout, prior_vec, prior_vec, bounds)
    mean_kernel, theta, sigma2 = init.theta0, init.theta, init.sigma2

    def posterior_for(mk, th, s2):
        noise = _NoiseCache(layout, th, s2, smooth=False)
        post, _ = _group_posterior(layout, noise, all_mask, prior_vec, mk, rmat)
        return post

    def objective(mk, th, s2, post):
        noise = _NoiseCache(layout, th, s2, smooth=False)
        total = _series_sum(layout, noise, all_mask, post)
        total += _prior_term(post, prior_vec, mk, grid, smooth=False)
        total += _entropy_term(post) + _roughness_expectation(post, rmat)
        return total

    post = posterior_for(mean_kernel, theta, sigma2)
    j_prev = objective(mean_kernel, theta, sigma2, post)
    q_history = [j_prev]

    for _ in range(max_iters):
        mk_new, f = _update_kernel_block(post, prior_vec, mean_kernel, grid, bounds)
        flags += [f"mean kernel: {msg}" for msg in f]
        carrier = replace(init, theta=theta, sigma2=sigma2)
        th_new, s2_new, f = _update_noise_block(
            layout, (post,), (all_mask,), None, carrier, bounds, None
        )
        flags += [f"kernel/noise: {msg}" for msg in f]
        j_cand = objective(mk_new, th_new, s2_new, post)
        if j_cand < j_prev:
            flags.append(
                "iteration rolled back: objective would decrease "
                f"({j_cand:.6e} < {j_prev:.6e})"
            )
            break
        old = np.array([mean_kernel.amplitude, mean_kernel.length_scale,
                        theta.amplitude, theta.length_scale, sigma2])
        new = np.array([mk_new.amplitude, mk_new.length_scale,
                        th_new.amplitude, th_new.length_scale, s2_new])
        delta = float(np.max(np.abs(new - old) / (1.0 + np.abs(old))))
        mean_kernel, theta, sigma2 = mk_new, th_new, s2_new
        q_history.append(j_cand)
        j_prev = j_cand
        post = posterior_for(mean_kernel, theta, sigma2)
        if delta < epsilon:
            break
    else:
        flags.append(f"stopped at max_iters={max_iters} before reaching epsilon={epsilon:g}")

    partial = BaselineModel(
        kind=MTGP_KIND,
        kernel=theta,
        sigma2=sigma2,
        coeffs=LogisticCoefficients(0.0, np.zeros(basis.num_basis)),
        grid=grid,
        basis=basis,
        prior_mean=prior_vec,
        mean_kernel=mean_kernel,
        mean_post=post,
        q_history=q_history,
        flags=flags,
    )
    coeffs = _logistic_stage(layout, partial.impute, basis, lam)
    return replace(partial, coeffs=coeffs)
