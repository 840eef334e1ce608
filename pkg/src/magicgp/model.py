"""Hierarchical multi-task GP classifier trained by EM.

Model: y_i(t) = mu_{z_i}(t) + delta_i(t) + noise, where the class-level mean
mu_z is a GP shared by all samples with label z, delta_i is a per-sample GP
deviation, and labels follow a functional logistic regression on the
basis-projected curve. Training alternates:

* E-step: exact Gaussian posteriors (m_tilde_z, K_tilde_z) for the class
  means, with an optional second-difference curvature penalty folded into
  the posterior precision. Samples contribute only through their observed
  grid indices (exact marginal likelihood; no imputation pre-pass).
* M-step: four block updates (class-0 kernel, class-1 kernel, logistic
  coefficients, shared kernel + noise), each maximized by bounded
  quasi-Newton and accepted only if its exactly evaluated objective part
  does not decrease.

The recorded objective (``q_history``) is the penalized evidence bound:
expected complete-data log-likelihood (``q_function``) plus the posterior
entropy terms and the curvature penalty expectation, minus the logistic
ridge penalty. Entries are recomputable from ``params_history``:
``q_history[r]`` equals ``em_objective`` at ``params_history[r]`` under the
posteriors from ``params_history[max(r-1, 0)]``. An iteration whose objective
would decrease is rolled back and the loop stops, so the history is
non-decreasing by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import (
    BasisConfig,
    basis_quadrature,
    functional_covariate,
    open_uniform_basis,
    weighted_double_integral,
)
from .errors import DataError, DegenerateLabelsError, InvalidParameterError, OptimizerFailure
from .gp import GaussianOnGrid
from .kernels import KernelParams, rbf_kernel_matrix
from .linalg import (
    chol_batched,
    chol_factor,
    chol_smooth,
    logdet_from_chol,
    solve_from_chol,
)
from .logistic import LogisticCoefficients, log1pexp
from .optimize import bounded_quasi_newton
from .series import SampleSeries
from .validation import check_grid, grid_indices

DEFAULT_EPSILON = 1e-4
DEFAULT_MAX_ITERS = 100
DEFAULT_LAMBDA = 1.0
DEFAULT_ROUGHNESS_WEIGHT = 1.0
DEFAULT_NUM_BASIS = 8


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class HyperBounds:
    """Box constraints for the quasi-Newton hyperparameter blocks."""

    amplitude: tuple = (1e-3, 1e4)
    length_scale: tuple = (1e-3, 1e4)
    noise: tuple = (1e-8, 1e2)

    def kernel_box(self):
        return [self.amplitude, self.length_scale]

    def kernel_noise_box(self):
        return [self.amplitude, self.length_scale, self.noise]


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set: three kernels, noise, logistic coefficients, and
    the fixed prior means of the two class-level GPs on the grid."""

    theta0: KernelParams
    theta1: KernelParams
    theta: KernelParams
    sigma2: float
    coeffs: LogisticCoefficients
    mean0: np.ndarray = field(repr=False)
    mean1: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 < 1e-8:
            raise InvalidParameterError(
                f"sigma2 must be finite and at least 1e-8, got {self.sigma2!r}"
            )
        object.__setattr__(self, "sigma2", float(self.sigma2))
        for name in ("mean0", "mean1"):
            vec = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if vec.size and not np.all(np.isfinite(vec)):
                raise InvalidParameterError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, vec)

    def class_mean(self, z: int) -> np.ndarray:
        return self.mean0 if z == 0 else self.mean1

    def class_kernel(self, z: int) -> KernelParams:
        return self.theta0 if z == 0 else self.theta1


class ClassPosterior(GaussianOnGrid):
    """Gaussian posterior of one class-level mean on the global grid."""


@dataclass(frozen=True)
class RoughnessPenalty:
    """Second-difference curvature penalty R = weight * D^T D."""

    dmat: np.ndarray = field(repr=False)
    rmat: np.ndarray = field(repr=False)
    weight: float = 0.0


@dataclass(frozen=True)
class TaylorMoments:
    """Mean and variance of the logistic linear predictor for one sample."""

    u: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise InvalidParameterError("moments must be finite")
        if self.v < 0:
            raise InvalidParameterError(f"variance must be nonnegative, got {self.v!r}")
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "v", float(self.v))


@dataclass
class EMState:
    """Final EM state: parameters, class posteriors, and iteration history.

    ``q_history[r]`` is the penalized evidence bound after iteration r
    (entry 0 is the pre-update value at the initial parameters) and
    ``params_history[r]`` holds the accepted parameters; see the module
    docstring for the exact re-computation rule.
    """

    params: ModelParams
    posteriors: tuple
    q_history: list
    params_history: list
    n_iter: int
    converged: bool
    flags: list


def build_roughness(grid, weight: float) -> RoughnessPenalty:
    """Second-difference penalty on a grid of length >= 3.

    D is (n-2) x n with rows applying the [1, -2, 1] stencil, so v^T R v
    vanishes exactly on affine sequences.
    """
    grid = check_grid(grid)
    if not np.isfinite(weight) or weight < 0:
        raise InvalidParameterError(f"roughness weight must be nonnegative, got {weight!r}")
    n = grid.size
    if n < 3:
        raise DataError(f"curvature penalty needs a grid of at least 3 points, got {n}")
    dmat = np.zeros((n - 2, n))
    rows = np.arange(n - 2)
    dmat[rows, rows] = 1.0
    dmat[rows, rows + 1] = -2.0
    dmat[rows, rows + 2] = 1.0
    return RoughnessPenalty(dmat=dmat, rmat=weight * (dmat.T @ dmat), weight=float(weight))


# ---------------------------------------------------------------------------
# Taylor label terms


def _taylor_term(u, v):
    """Vectorized log(1+e^u+e^u v/2) - e^{2u} v / (2 (1+e^u+e^u v/2)^2).

    Written through logaddexp so large |u| neither overflows nor loses the
    correction term: with L = log(1+e^u(1+v/2)), the correction equals
    (v/2) * exp(2(u - L)) and u - L <= 0 always.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lse = np.logaddexp(0.0, u + np.log1p(0.5 * v))
    return lse - 0.5 * v * np.exp(2.0 * (u - lse))


def taylor_label_term(moments: TaylorMoments) -> float:
    """Second-order approximation of E[log(1 + e^X)], X ~ N(u, v)."""
    return float(_taylor_term(moments.u, moments.v))


def label_likelihood(moments: TaylorMoments, z: int) -> float:
    """Approximate E[z X - log(1 + e^X)] for one sample."""
    if z not in (0, 1):
        raise InvalidParameterError(f"label must be 0 or 1, got {z!r}")
    return float(z) * moments.u - taylor_label_term(moments)


# ---------------------------------------------------------------------------
# dataset layout and per-parameter caches


class _LengthGroup:
    """Samples sharing an observed count, stacked for batched linear algebra."""

    __slots__ = ("k", "members", "idx", "y", "un_idx")

    def __init__(self, k, members, idx, y, un_idx):
        self.k = k
        self.members = members  # (g,) sample positions
        self.idx = idx          # (g, k) observed grid indices
        self.y = y              # (g, k) observed values
        self.un_idx = un_idx    # (g, n-k) unobserved grid indices


class _Layout:
    """Grid-aligned view of a dataset, grouped by observed count."""

    def __init__(self, samples, grid, require_obs=True):
        self.grid = check_grid(grid)
        self.samples = list(samples)
        self.n = self.grid.size
        self.n_samples = len(self.samples)
        if self.n_samples == 0:
            raise DataError("dataset is empty")
        self.idx = []
        for s in self.samples:
            if not isinstance(s, SampleSeries):
                raise InvalidParameterError(f"expected SampleSeries, got {type(s).__name__}")
            if require_obs and s.n_obs < 1:
                raise DataError(f"sample {s.id!r} has no observations")
            self.idx.append(grid_indices(s.times, self.grid))
        self.labels = np.array(
            [-1 if s.label is None else int(s.label) for s in self.samples], dtype=int
        )
        self.groups = []
        lengths = np.array([ix.size for ix in self.idx])
        all_cols = np.arange(self.n)
        for k in sorted(set(lengths.tolist())):
            members = np.nonzero(lengths == k)[0]
            idx = np.stack([self.idx[i] for i in members]) if k else np.empty((members.size, 0), dtype=np.intp)
            y = np.stack([self.samples[i].values for i in members]) if k else np.empty((members.size, 0))
            mask = np.ones((members.size, self.n), dtype=bool)
            rows = np.arange(members.size)[:, None]
            if k:
                mask[rows, idx] = False
            un_idx = np.broadcast_to(all_cols, (members.size, self.n))[mask].reshape(members.size, self.n - k)
            self.groups.append(_LengthGroup(k, members, idx, y, un_idx))

    def label_mask(self, z: int) -> np.ndarray:
        return self.labels == z


class _NoiseCache:
    """Per-(theta, sigma2) quantities: kernel gram, stacked inverses, logdets."""

    __slots__ = ("theta", "sigma2", "kfull", "ainv", "logdet")

    def __init__(self, layout: _Layout, theta: KernelParams, sigma2: float, smooth: bool):
        self.theta = theta
        self.sigma2 = sigma2
        self.kfull = rbf_kernel_matrix(theta, layout.grid)
        self.ainv = []
        self.logdet = []
        for grp in layout.groups:
            if grp.k == 0:
                self.ainv.append(np.empty((grp.members.size, 0, 0)))
                self.logdet.append(np.zeros(grp.members.size))
                continue
            a = self.kfull[grp.idx[:, :, None], grp.idx[:, None, :]] + sigma2 * np.eye(grp.k)
            if smooth:
                low, jit = chol_smooth(a)
            else:
                low, jit = chol_batched(a)
            a_eff = a + jit[:, None, None] * np.eye(grp.k)
            inv = np.linalg.solve(a_eff, np.broadcast_to(np.eye(grp.k), a.shape).copy())
            self.ainv.append(0.5 * (inv + inv.transpose(0, 2, 1)))
            self.logdet.append(logdet_from_chol(low))


def _group_posterior(layout, noise, member_mask, prior_mean, mean_kernel, rmat):
    """Posterior (m_tilde, K_tilde) of one latent mean.

    Uses the inverse-free form K_tilde = (I + K_z M)^{-1} K_z and
    m_tilde = (I + K_z M)^{-1} (m + K_z h), with M the scattered sum of
    per-sample noise-space precisions plus the penalty, and h the matching
    scattered sum of precision-weighted observations. Algebraically equal to
    the precision form (K_z^{-1} + R + sum_i P_i^T A_i^{-1} P_i)^{-1} but
    never inverts the prior gram, so nearly singular priors stay stable and
    a zero-sample class with no penalty reproduces the prior exactly.
    """
    n = layout.n
    kz = rbf_kernel_matrix(mean_kernel, layout.grid)
    m = np.zeros((n, n))
    h = np.zeros(n)
    count = 0
    if rmat is not None:
        m += rmat
    for grp, ainv in zip(layout.groups, noise.ainv):
        sel = member_mask[grp.members]
        count += int(sel.sum())
        if not sel.any() or grp.k == 0:
            continue
        idx_sel = grp.idx[sel]
        ainv_sel = ainv[sel]
        av = np.einsum("gij,gj->gi", ainv_sel, grp.y[sel])
        for row in range(idx_sel.shape[0]):
            ii = idx_sel[row]
            m[np.ix_(ii, ii)] += ainv_sel[row]
            h[ii] += av[row]
    wmat = np.eye(n) + kz @ m
    try:
        ktilde = np.linalg.solve(wmat, kz)
        mtilde = np.linalg.solve(wmat, prior_mean + kz @ h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - PSD products keep wmat regular
        raise DataError(f"class-mean posterior solve failed: {exc}") from exc
    return ClassPosterior(mtilde, 0.5 * (ktilde + ktilde.T)), count


def _series_sum(layout, noise, member_mask, post) -> float:
    """-1/2 sum over selected samples of [logdet A_i + tr(K_tilde[o,o] A_i^{-1})
    + r_i^T A_i^{-1} r_i], restricted to observed indices. No 2*pi constants."""
    total = 0.0
    for grp, ainv, logdet in zip(layout.groups, noise.ainv, noise.logdet):
        sel = member_mask[grp.members]
        if not sel.any() or grp.k == 0:
            continue
        idx_sel = grp.idx[sel]
        ainv_sel = ainv[sel]
        ksub = post.cov[idx_sel[:, :, None], idx_sel[:, None, :]]
        tr = np.einsum("gij,gij->g", ksub, ainv_sel)
        r = grp.y[sel] - post.mean[idx_sel]
        quad = np.einsum("gi,gij,gj->g", r, ainv_sel, r)
        total += -0.5 * float((logdet[sel] + tr + quad).sum())
    return total


def _prior_term(post, prior_mean, kernel, grid, smooth) -> float:
    """-1/2 [logdet K_z + tr(K_tilde K_z^{-1}) + (m_tilde-m)^T K_z^{-1} (m_tilde-m)]."""
    kz = rbf_kernel_matrix(kernel, grid)
    low, _ = chol_smooth(kz) if smooth else chol_factor(kz)
    logdet = float(logdet_from_chol(low))
    tr = float(np.trace(solve_from_chol(low, post.cov)))
    d = post.mean - prior_mean
    quad = float(d @ solve_from_chol(low, d))
    return -0.5 * (logdet + tr + quad)


def _entropy_term(post) -> float:
    """Gaussian entropy up to additive constants: 1/2 logdet K_tilde."""
    low, _ = chol_factor(post.cov)
    return 0.5 * float(logdet_from_chol(low))


def _roughness_expectation(post, rmat) -> float:
    """-1/2 E[mu^T R mu] = -1/2 (m_tilde^T R m_tilde + tr(R K_tilde))."""
    if rmat is None:
        return 0.0
    return -0.5 * float(post.mean @ rmat @ post.mean + np.sum(rmat * post.cov))


def _predictor_moments(layout, noise, member_mask, post, qmat, coeffs):
    """Per-sample (U_i, V_i) for the selected samples, with coeffs fixed.

    V is evaluated through the projected unobserved-block covariance
    s^T C s with s = (Q^T beta_1) restricted to unobserved indices, which is
    the quadratic form of the full double-integral matrix without building it.
    Returns (u, v) arrays over the whole dataset, zero outside the selection.
    """
    n_samples = layout.n_samples
    u_out = np.zeros(n_samples)
    v_out = np.zeros(n_samples)
    beta1 = coeffs.weights
    proj = qmat.T @ beta1  # (n,)
    for grp, ainv in zip(layout.groups, noise.ainv):
        sel = member_mask[grp.members]
        if not sel.any():
            continue
        members_sel = grp.members[sel]
        fbar, c_uu, un_sel = _conditional_curves(layout, noise, grp, ainv, sel, post)
        u_out[members_sel] = coeffs.intercept + fbar @ (qmat.T @ beta1)
        if c_uu is not None:
            s = proj[un_sel]  # (g, nu)
            v = np.einsum("ga,gab,gb->g", s, c_uu, s)
            v_out[members_sel] = np.maximum(v, 0.0)
    return u_out, v_out


def _covariate_moments(layout, noise, member_mask, post, qmat):
    """Per-sample covariate integrals a_i (K,) and projected covariance
    W_i (K, K) so that U = b0 + a @ b1 and V = b1^T W b1. Zero outside the
    selection. Used by the coefficient block where beta varies."""
    n_samples = layout.n_samples
    kdim = qmat.shape[0]
    a_out = np.zeros((n_samples, kdim))
    w_out = np.zeros((n_samples, kdim, kdim))
    for grp, ainv in zip(layout.groups, noise.ainv):
        sel = member_mask[grp.members]
        if not sel.any():
            continue
        members_sel = grp.members[sel]
        fbar, c_uu, un_sel = _conditional_curves(layout, noise, grp, ainv, sel, post)
        a_out[members_sel] = fbar @ qmat.T
        if c_uu is not None:
            s = qmat.T[un_sel]  # (g, nu, K)
            w = np.einsum("gaf,gab,gbh->gfh", s, c_uu, s)
            w_out[members_sel] = 0.5 * (w + w.transpose(0, 2, 1))
    return a_out, w_out


def _conditional_curves(layout, noise, grp, ainv, sel, post):
    """Shared moment plumbing for one length group.

    Returns (fbar, c_uu, un_sel): conditional-mean completed curves (g, n),
    the unobserved-block covariance of the completed curve under the
    class-mean posterior (None when fully observed), and the unobserved
    index rows.
    """
    gsel = int(sel.sum())
    n = layout.n
    ainv_sel = ainv[sel]
    idx_sel = grp.idx[sel]
    y_sel = grp.y[sel]
    un_sel = grp.un_idx[sel]
    nu = n - grp.k
    rows = np.arange(gsel)[:, None]
    if nu == 0:
        return y_sel.copy(), None, un_sel
    if grp.k == 0:
        fbar = np.broadcast_to(post.mean, (gsel, n)).copy()
        c_uu = np.broadcast_to(post.cov, (gsel, n, n)).copy()
        return fbar, c_uu, un_sel
    kuo = noise.kfull[un_sel[:, :, None], idx_sel[:, None, :]]  # (g, nu, k)
    bmat = kuo @ ainv_sel
    resid = y_sel - post.mean[idx_sel]
    fbar = np.empty((gsel, n))
    fbar[rows, idx_sel] = y_sel
    fbar[rows, un_sel] = post.mean[un_sel] + np.einsum("gij,gj->gi", bmat, resid)
    kt_uu = post.cov[un_sel[:, :, None], un_sel[:, None, :]]
    kt_uo = post.cov[un_sel[:, :, None], idx_sel[:, None, :]]
    kt_oo = post.cov[idx_sel[:, :, None], idx_sel[:, None, :]]
    t1 = bmat @ kt_uo.transpose(0, 2, 1)
    c_uu = kt_uu - t1 - t1.transpose(0, 2, 1) + bmat @ kt_oo @ bmat.transpose(0, 2, 1)
    return fbar, c_uu, un_sel


def _label_sum(layout, u, v, member_mask) -> float:
    sel = member_mask
    z = layout.labels[sel].astype(float)
    return float(np.sum(z * u[sel] - _taylor_term(u[sel], v[sel])))


# ---------------------------------------------------------------------------
# public operations


def e_step(samples, grid, params: ModelParams, penalty: RoughnessPenalty | None = None):
    """Class-mean posteriors under the current parameters.

    Every sample contributes exactly through its observed grid indices. A
    class with zero samples keeps its prior (penalty folded in when present)
    and triggers a warning.
    """
    layout = _Layout(samples, grid)
    if np.any(layout.labels < 0):
        raise DataError("every sample needs a 0/1 label for the E-step")
    noise = _NoiseCache(layout, params.theta, params.sigma2, smooth=False)
    rmat = penalty.rmat if penalty is not None else None
    out = []
    for z in (0, 1):
        post, count = _group_posterior(
            layout, noise, layout.label_mask(z), params.class_mean(z),
            params.class_kernel(z), rmat,
        )
        if count == 0:
            warnings.warn(f"class {z} has no samples; posterior equals its prior", RuntimeWarning)
        out.append(post)
    return out[0], out[1]


def compute_moments(sample: SampleSeries, post: ClassPosterior, params: ModelParams,
                    grid, basis: BasisConfig) -> TaylorMoments:
    """Mean and variance of the logistic predictor for one sample.

    The completed curve takes observed values at observed indices and the
    conditional mean elsewhere; its covariance is restricted to the
    unobserved block (zero rows and columns at observed points) before the
    basis double integral.
    """
    grid = check_grid(grid)
    obs = grid_indices(sample.times, grid)
    n = grid.size
    mask = np.ones(n, dtype=bool)
    mask[obs] = False
    un = np.nonzero(mask)[0]
    kfull = rbf_kernel_matrix(params.theta, grid)
    fbar = np.empty(n)
    fbar[obs] = sample.values
    c_full = np.zeros((n, n))
    if un.size:
        if obs.size:
            a = kfull[np.ix_(obs, obs)] + params.sigma2 * np.eye(obs.size)
            low, _ = chol_factor(a)
            bmat = solve_from_chol(low, kfull[np.ix_(obs, un)]).T  # (nu, k)
            fbar[un] = post.mean[un] + bmat @ (sample.values - post.mean[obs])
            t1 = bmat @ post.cov[np.ix_(obs, un)]
            c_uu = post.cov[np.ix_(un, un)] - t1 - t1.T + bmat @ post.cov[np.ix_(obs, obs)] @ bmat.T
        else:
            fbar[un] = post.mean[un]
            c_uu = post.cov[np.ix_(un, un)]
        c_full[np.ix_(un, un)] = c_uu
    x = functional_covariate(fbar, grid, basis)
    u = float(params.coeffs.stacked() @ x)
    wmat = weighted_double_integral(c_full, grid, basis)
    v = float(params.coeffs.weights @ wmat @ params.coeffs.weights)
    return TaylorMoments(u, max(v, 0.0))


def q_function(samples, grid, params: ModelParams, posteriors, basis: BasisConfig):
    """Expected complete-data log-likelihood under the given posteriors.

    Returns (total, breakdown) where breakdown has the label, series, and
    two prior contributions. Additive 2*pi constants are dropped; Gaussian
    series terms are restricted to each sample's observed indices.
    """
    layout = _Layout(samples, grid)
    if np.any(layout.labels < 0):
        raise DataError("every sample needs a 0/1 label to evaluate the objective")
    grid = layout.grid
    qmat = basis_quadrature(basis, grid)
    noise = _NoiseCache(layout, params.theta, params.sigma2, smooth=False)
    post0, post1 = posteriors
    breakdown = {}
    series = 0.0
    labels = 0.0
    for z, post in ((0, post0), (1, post1)):
        mask = layout.label_mask(z)
        series += _series_sum(layout, noise, mask, post)
        u, v = _predictor_moments(layout, noise, mask, post, qmat, params.coeffs)
        labels += _label_sum(layout, u, v, mask)
    breakdown["labels"] = labels
    breakdown["series"] = series
    breakdown["prior0"] = _prior_term(post0, params.mean0, params.theta0, grid, smooth=False)
    breakdown["prior1"] = _prior_term(post1, params.mean1, params.theta1, grid, smooth=False)
    total = sum(breakdown.values())
    return total, breakdown


def em_objective(samples, grid, params: ModelParams, posteriors, basis: BasisConfig,
                 penalty: RoughnessPenalty | None = None, lam: float = 0.0) -> float:
    """Penalized evidence bound recorded in ``q_history``.

    q_function plus posterior entropies and the curvature-penalty
    expectation, minus (lam/2) ||weights||^2. Monotone over accepted EM
    iterations.
    """
    total, _ = q_function(samples, grid, params, posteriors, basis)
    rmat = penalty.rmat if penalty is not None else None
    for post in posteriors:
        total += _entropy_term(post) + _roughness_expectation(post, rmat)
    total -= 0.5 * lam * float(np.sum(params.coeffs.weights**2))
    return float(total)


# ---------------------------------------------------------------------------
# M-step blocks


def _update_kernel_block(post, prior_mean, kernel, grid, bounds):
    """Maximize one class-mean prior term over (amplitude, length_scale)."""
    flags = []

    def objective(x):
        return _prior_term(post, prior_mean, KernelParams(x[0], x[1]), grid, smooth=True)

    try:
        x_new, _, _ = bounded_quasi_newton(objective, kernel.as_array(), bounds.kernel_box())
    except OptimizerFailure as exc:
        return kernel, [f"kernel block optimizer failed ({exc}); kept previous value"]
    candidate = KernelParams(x_new[0], x_new[1])
    old = _prior_term(post, prior_mean, kernel, grid, smooth=False)
    new = _prior_term(post, prior_mean, candidate, grid, smooth=False)
    if new >= old:
        return candidate, flags
    flags.append("kernel block candidate rejected by monotone acceptance")
    return kernel, flags


def _update_coeff_block(layout, a_arr, w_arr, coeffs, lam):
    """Maximize the label terms plus ridge penalty over the coefficients."""
    flags = []
    z = layout.labels.astype(float)

    def objective(beta):
        u = beta[0] + a_arr @ beta[1:]
        v = np.maximum(np.einsum("nij,i,j->n", w_arr, beta[1:], beta[1:]), 0.0)
        return float(np.sum(z * u - _taylor_term(u, v)) - 0.5 * lam * np.sum(beta[1:] ** 2))

    x0 = coeffs.stacked()
    try:
        x_new, _, _ = bounded_quasi_newton(objective, x0, bounds=None)
    except OptimizerFailure as exc:
        return coeffs, [f"coefficient block optimizer failed ({exc}); kept previous value"]
    if objective(x_new) >= objective(x0):
        return LogisticCoefficients(x_new[0], x_new[1:]), flags
    flags.append("coefficient block candidate rejected by monotone acceptance")
    return coeffs, flags


def _series_label_objective(layout, posts, masks, qmat, coeffs, smooth):
    """Factory for the shared-kernel/noise objective: series + label terms."""

    def objective(x):
        kern = KernelParams(x[0], x[1])
        noise = _NoiseCache(layout, kern, float(x[2]), smooth=smooth)
        total = 0.0
        for post, mask in zip(posts, masks):
            total += _series_sum(layout, noise, mask, post)
            if coeffs is not None:
                u, v = _predictor_moments(layout, noise, mask, post, qmat, coeffs)
                total += _label_sum(layout, u, v, mask)
        return total

    return objective


def _update_noise_block(layout, posts, masks, qmat, params, bounds, coeffs):
    """Maximize series (+ label) terms over (amplitude, length_scale, sigma2)."""
    flags = []
    smooth_obj = _series_label_objective(layout, posts, masks, qmat, coeffs, smooth=True)
    exact_obj = _series_label_objective(layout, posts, masks, qmat, coeffs, smooth=False)
    x0 = np.array([params.theta.amplitude, params.theta.length_scale, params.sigma2])
    try:
        x_new, _, _ = bounded_quasi_newton(smooth_obj, x0, bounds.kernel_noise_box())
    except OptimizerFailure as exc:
        return params.theta, params.sigma2, [
            f"noise block optimizer failed ({exc}); kept previous value"
        ]
    if exact_obj(x_new) >= exact_obj(x0):
        return KernelParams(x_new[0], x_new[1]), float(x_new[2]), flags
    flags.append("noise block candidate rejected by monotone acceptance")
    return params.theta, params.sigma2, flags


def _m_step_core(layout, qmat, params, posteriors, lam, bounds):
    """Sequential block updates; each block keeps its previous value unless
    its exactly evaluated objective part does not decrease."""
    post0, post1 = posteriors
    grid = layout.grid
    flags = []

    theta0, f = _update_kernel_block(post0, params.mean0, params.theta0, grid, bounds)
    flags += [f"theta0: {msg}" for msg in f]
    theta1, f = _update_kernel_block(post1, params.mean1, params.theta1, grid, bounds)
    flags += [f"theta1: {msg}" for msg in f]

    noise = _NoiseCache(layout, params.theta, params.sigma2, smooth=False)
    mask0, mask1 = layout.label_mask(0), layout.label_mask(1)
    a0, w0 = _covariate_moments(layout, noise, mask0, post0, qmat)
    a1, w1 = _covariate_moments(layout, noise, mask1, post1, qmat)
    coeffs, f = _update_coeff_block(layout, a0 + a1, w0 + w1, params.coeffs, lam)
    flags += [f"beta: {msg}" for msg in f]

    interim = replace(params, theta0=theta0, theta1=theta1, coeffs=coeffs)
    theta, sigma2, f = _update_noise_block(
        layout, (post0, post1), (mask0, mask1), qmat, interim, bounds, coeffs
    )
    flags += [f"theta/sigma2: {msg}" for msg in f]
    return replace(interim, theta=theta, sigma2=sigma2), flags


def m_step(state: EMState, samples, grid, basis: BasisConfig,
           penalty: RoughnessPenalty | None = None, lam: float = DEFAULT_LAMBDA,
           bounds: HyperBounds | None = None) -> ModelParams:
    """One sequential pass over the four parameter blocks.

    Each block update is accepted only if the affected part of the objective,
    evaluated exactly, does not decrease; otherwise the previous block value
    is retained.
    """
    del penalty  # posterior-side quantities are fixed inside the M-step
    layout = _Layout(samples, grid)
    if np.any(layout.labels < 0):
        raise DataError("every sample needs a 0/1 label for the M-step")
    qmat = basis_quadrature(basis, layout.grid)
    new_params, _ = _m_step_core(
        layout, qmat, state.params, state.posteriors, lam, bounds or HyperBounds()
    )
    return new_params


# ---------------------------------------------------------------------------
# outer EM loop


def _block_delta(old: ModelParams, new: ModelParams) -> float:
    """Largest relative parameter change across the four blocks."""
    pairs = [
        (old.theta0.as_array(), new.theta0.as_array()),
        (old.theta1.as_array(), new.theta1.as_array()),
        (old.coeffs.stacked(), new.coeffs.stacked()),
        (
            np.append(old.theta.as_array(), old.sigma2),
            np.append(new.theta.as_array(), new.sigma2),
        ),
    ]
    delta = 0.0
    for prev, cur in pairs:
        delta = max(delta, float(np.max(np.abs(cur - prev) / (1.0 + np.abs(prev)))))
    return delta


def _initial_params(layout, mean0, mean1, bounds) -> ModelParams:
    """Data-scale initialization: amplitude from the pooled standard
    deviation, length scale 0.3 of the grid span, noise a tenth of the
    variance, coefficients zero."""
    values = np.concatenate([s.values for s in layout.samples])
    sd = float(np.std(values))
    span = float(layout.grid[-1] - layout.grid[0]) if layout.n > 1 else 1.0
    amp = float(np.clip(sd if sd > 0 else 1.0, *bounds.amplitude))
    length = float(np.clip(0.3 * span if span > 0 else 1.0, *bounds.length_scale))
    sigma2 = float(np.clip(0.1 * sd**2 if sd > 0 else 0.1, *bounds.noise))
    kern = KernelParams(amp, length)
    return ModelParams(
        theta0=kern,
        theta1=kern,
        theta=kern,
        sigma2=sigma2,
        coeffs=LogisticCoefficients(0.0, np.zeros(DEFAULT_NUM_BASIS)),
        mean0=mean0,
        mean1=mean1,
    )


def _as_grid_mean(mean, grid, name):
    if mean is None:
        return np.zeros(grid.size)
    if callable(mean):
        mean = mean(grid)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if mean.size != grid.size:
        raise InvalidParameterError(
            f"{name} has length {mean.size}, expected grid length {grid.size}"
        )
    if not np.all(np.isfinite(mean)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return mean


def fit(samples, grid, *, basis: BasisConfig | None = None, lam: float = DEFAULT_LAMBDA,
        roughness_weight: float = DEFAULT_ROUGHNESS_WEIGHT, mean0=None, mean1=None,
        epsilon: float = DEFAULT_EPSILON, max_iters: int = DEFAULT_MAX_ITERS,
        bounds: HyperBounds | None = None, init_params: ModelParams | None = None) -> EMState:
    """Train the hierarchical classifier by EM with monotone acceptance.

    Stops when the largest relative per-block parameter change drops below
    ``epsilon``, when an iteration fails to improve the recorded objective
    (the update is rolled back), or at ``max_iters``. Deterministic for a
    fixed dataset.
    """
    layout = _Layout(samples, grid)
    grid = layout.grid
    if np.any(layout.labels < 0):
        raise DataError("every training sample needs a 0/1 label")
    n0 = int(np.sum(layout.labels == 0))
    n1 = int(np.sum(layout.labels == 1))
    if n0 == 0 or n1 == 0:
        raise DegenerateLabelsError(
            f"training data must contain both classes (got {n0} of class 0, {n1} of class 1)"
        )
    if basis is None:
        basis = open_uniform_basis(DEFAULT_NUM_BASIS, grid[0], grid[-1])
    if lam < 0:
        raise InvalidParameterError(f"lam must be nonnegative, got {lam!r}")
    if epsilon <= 0 or max_iters < 1:
        raise InvalidParameterError("epsilon must be positive and max_iters at least 1")
    bounds = bounds or HyperBounds()
    mean0 = _as_grid_mean(mean0, grid, "mean0")
    mean1 = _as_grid_mean(mean1, grid, "mean1")
    penalty = build_roughness(grid, roughness_weight) if roughness_weight > 0 else None
    rmat = penalty.rmat if penalty is not None else None
    qmat = basis_quadrature(basis, grid)

    if init_params is None:
        params = _initial_params(layout, mean0, mean1, bounds)
        if params.coeffs.num_basis != basis.num_basis:
            params = replace(params, coeffs=LogisticCoefficients(0.0, np.zeros(basis.num_basis)))
    else:
        params = replace(init_params, mean0=mean0, mean1=mean1)
        if params.coeffs.num_basis != basis.num_basis:
            raise InvalidParameterError(
                "initial coefficients do not match the basis dimension"
            )

    def posterior_pair(p):
        noise = _NoiseCache(layout, p.theta, p.sigma2, smooth=False)
        out = []
        for z in (0, 1):
            post, _ = _group_posterior(
                layout, noise, layout.label_mask(z), p.class_mean(z), p.class_kernel(z), rmat
            )
            out.append(post)
        return tuple(out)

    def objective(p, posts):
        return em_objective(layout.samples, grid, p, posts, basis, penalty, lam)

    flags: list = []
    posts = posterior_pair(params)
    j_prev = objective(params, posts)
    q_history = [j_prev]
    params_history = [params]
    converged = False

    for _ in range(max_iters):
        candidate, step_flags = _m_step_core(layout, qmat, params, posts, lam, bounds)
        flags += step_flags
        j_cand = objective(candidate, posts)
        if j_cand < j_prev:
            flags.append(
                "iteration rolled back: objective would decrease "
                f"({j_cand:.6e} < {j_prev:.6e})"
            )
            converged = True
            break
        delta = _block_delta(params, candidate)
        params = candidate
        q_history.append(j_cand)
        params_history.append(params)
        j_prev = j_cand
        posts = posterior_pair(params)
        if delta < epsilon:
            converged = True
            break
    else:
        flags.append(f"stopped at max_iters={max_iters} before reaching epsilon={epsilon:g}")

    return EMState(
        params=params,
        posteriors=posts,
        q_history=q_history,
        params_history=params_history,
        n_iter=len(q_history) - 1,
        converged=converged,
        flags=flags,
    )
