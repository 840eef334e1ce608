"""Gaussians on a grid and single-GP conditioning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .kernels import KernelParams, rbf_kernel_matrix
from .linalg import chol_factor, solve_from_chol

# Diagonal entries more negative than this (relative to scale) indicate an
# upstream bug rather than roundoff and are rejected instead of clipped.
_DIAG_FLOOR = 1e-8


@dataclass
class GaussianOnGrid:
    """A multivariate normal over grid points: mean vector plus covariance.

    The covariance is symmetrized on construction and tiny negative diagonal
    roundoff is clipped to zero, so stored instances satisfy exact symmetry
    and a nonnegative diagonal.
    """

    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise InvalidParameterError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if mean.size:
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
                raise InvalidParameterError("Gaussian moments contain non-finite entries")
            scale = max(float(np.abs(np.diag(cov)).max()), 1.0)
            cov = 0.5 * (cov + cov.T)
            d = np.diag(cov).copy()
            if float(d.min(initial=0.0)) < -_DIAG_FLOOR * scale:
                raise InvalidParameterError("covariance diagonal is negative beyond roundoff")
            np.fill_diagonal(cov, np.maximum(d, 0.0))
        self.mean = mean
        self.cov = cov

    @property
    def size(self) -> int:
        return self.mean.size


def zero_mean(times) -> np.ndarray:
    return np.zeros(np.asarray(times, dtype=float).shape, dtype=float)


def sgp_posterior(
    obs_times,
    obs_values,
    targets,
    mean_fn,
    params: KernelParams,
    noise_var: float,
) -> GaussianOnGrid:
    """Posterior of a single GP at ``targets`` given noisy observations.

    mean = m(t*) + K(t*,t)[K(t,t)+s2 I]^{-1}(y - m(t));
    cov  = K(t*,t*) - K(t*,t)[K(t,t)+s2 I]^{-1}K(t,t*).

    ``mean_fn`` maps time arrays to prior mean values; None means zero.
    Empty targets yield an empty Gaussian; empty observations yield the prior.
    The returned covariance carries no observation noise on the targets.
    """
    if noise_var < 0:
        raise InvalidParameterError(f"noise variance must be nonnegative, got {noise_var!r}")
    mean_fn = mean_fn or zero_mean
    t_obs = np.asarray(obs_times, dtype=float).reshape(-1)
    y = np.asarray(obs_values, dtype=float).reshape(-1)
    t_new = np.asarray(targets, dtype=float).reshape(-1)
    if y.size != t_obs.size:
        raise InvalidParameterError("observation times and values differ in length")
    if t_new.size == 0:
        return GaussianOnGrid(np.empty(0), np.empty((0, 0)))

    m_new = np.asarray(mean_fn(t_new), dtype=float).reshape(-1)
    k_new = rbf_kernel_matrix(params, t_new)
    if t_obs.size == 0:
        return GaussianOnGrid(m_new, k_new)

    m_obs = np.asarray(mean_fn(t_obs), dtype=float).reshape(-1)
    k_obs = rbf_kernel_matrix(params, t_obs) + noise_var * np.eye(t_obs.size)
    k_cross = rbf_kernel_matrix(params, t_new, t_obs)
    low, _ = chol_factor(k_obs)
    mean = m_new + k_cross @ solve_from_chol(low, y - m_obs)
    cov = k_new - k_cross @ solve_from_chol(low, k_cross.T)
    return GaussianOnGrid(mean, cov)


def conditional_from_joint(mean: np.ndarray, cov: np.ndarray, obs_idx, obs_values):
    """Condition a joint Gaussian on exact values at ``obs_idx``.

    Returns (curve, variance): the conditional mean over all coordinates with
    observed positions passing through unchanged (variance zero there).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    obs_idx = np.asarray(obs_idx, dtype=np.intp)
    y = np.asarray(obs_values, dtype=float)
    n = mean.size

    curve = mean.copy()
    var = np.diag(cov).copy()
    if obs_idx.size == 0:
        return curve, var
    mask = np.ones(n, dtype=bool)
    mask[obs_idx] = False
    un_idx = np.nonzero(mask)[0]
    curve[obs_idx] = y
    var[obs_idx] = 0.0
    if un_idx.size == 0:
        return curve, var

    a_oo = cov[np.ix_(obs_idx, obs_idx)]
    g_uo = cov[np.ix_(un_idx, obs_idx)]
    low, _ = chol_factor(a_oo)
    curve[un_idx] = mean[un_idx] + g_uo @ solve_from_chol(low, y - mean[obs_idx])
    reduction = np.einsum("ij,ji->i", g_uo, solve_from_chol(low, g_uo.T))
    var[un_idx] = np.maximum(var[un_idx] - reduction, 0.0)
    return curve, var
