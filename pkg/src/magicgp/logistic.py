"""Penalized functional logistic regression on basis covariates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidParameterError
from .optimize import bounded_quasi_newton
from .validation import check_binary_labels


@dataclass(frozen=True)
class LogisticCoefficients:
    """Intercept plus weights for the basis-projected covariate."""

    intercept: float
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.isfinite(self.intercept):
            raise InvalidParameterError("intercept must be finite")
        if weights.size and not np.all(np.isfinite(weights)):
            raise InvalidParameterError("weights contain non-finite entries")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "weights", weights)

    def stacked(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.weights])

    @property
    def num_basis(self) -> int:
        return self.weights.size


def log1pexp(u):
    """log(1 + exp(u)) without overflow."""
    return np.logaddexp(0.0, u)


def flr_prob(coeffs: LogisticCoefficients, covariate) -> float:
    """Probability of class 1 for a covariate vector [1, x_1, ..., x_K]."""
    x = np.asarray(covariate, dtype=float).reshape(-1)
    if x.size != coeffs.num_basis + 1:
        raise InvalidParameterError(
            f"covariate length {x.size} does not match coefficient length "
            f"{coeffs.num_basis + 1}"
        )
    return float(expit(coeffs.stacked() @ x))


def fit_flr(covariates, labels, lam: float) -> LogisticCoefficients:
    """Maximize sum(z u - log(1+e^u)) - (lam/2)||weights||^2, u = x @ beta.

    The intercept is unpenalized. ``covariates`` is an (N, K+1) matrix (or a
    list of covariate vectors) whose first column is the constant 1.
    """
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    z = check_binary_labels(labels, require_both=True).astype(float)
    if x.shape[0] != z.size:
        raise InvalidParameterError(
            f"{x.shape[0]} covariates but {z.size} labels"
        )
    if lam < 0:
        raise InvalidParameterError(f"penalty must be nonnegative, got {lam!r}")

    def penalized_loglik(beta):
        u = x @ beta
        return float(np.sum(z * u - log1pexp(u)) - 0.5 * lam * np.sum(beta[1:] ** 2))

    beta0 = np.zeros(x.shape[1])
    beta, _, _ = bounded_quasi_newton(penalized_loglik, beta0, bounds=None)
    return LogisticCoefficients(beta[0], beta[1:])
