"""scikit-learn style estimator wrappers.

Samples are ragged (each has its own observed times), so ``X`` is a sequence
of per-sample records rather than a rectangular matrix. Accepted record
forms: a SampleSeries, a (times, values) pair, or a dict with ``times`` and
``values`` (optionally ``id``). ``y`` is the matching sequence of 0/1 labels.

All three estimators expose fit / predict / predict_proba / impute and
integrate with sklearn's get_params/set_params and clone.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .baselines import fit_mtgp, fit_sgp
from .basis import open_uniform_basis
from .errors import DataError, InvalidParameterError
from .model import HyperBounds, fit
from .predict import ClassPrior, MagicModel, predict_sample
from .series import SampleSeries
from .validation import check_binary_labels, check_grid


def as_sample(record, index: int, label=None) -> SampleSeries:
    """Normalize one input record to a SampleSeries."""
    if isinstance(record, SampleSeries):
        if label is None or record.label == label:
            return record
        return record.with_label(int(label))
    if isinstance(record, dict):
        return SampleSeries(
            id=str(record.get("id", f"sample-{index:03d}")),
            times=np.asarray(record["times"], dtype=float),
            values=np.asarray(record["values"], dtype=float),
            label=None if label is None else int(label),
        )
    try:
        times, values = record
    except (TypeError, ValueError):
        raise InvalidParameterError(
            "each sample must be a SampleSeries, a (times, values) pair, "
            f"or a dict; got {type(record).__name__}"
        ) from None
    return SampleSeries(
        id=f"sample-{index:03d}",
        times=np.asarray(times, dtype=float),
        values=np.asarray(values, dtype=float),
        label=None if label is None else int(label),
    )


def _as_samples(X, y=None) -> list:
    X = list(X)
    if y is None:
        return [as_sample(rec, i) for i, rec in enumerate(X)]
    labels = check_binary_labels(y, require_both=True)
    if labels.size != len(X):
        raise DataError(f"got {len(X)} samples but {labels.size} labels")
    return [as_sample(rec, i, int(labels[i])) for i, rec in enumerate(X)]


def _infer_grid(samples) -> np.ndarray:
    times = np.unique(np.concatenate([s.times for s in samples]))
    return check_grid(times)


class _GridBasisMixin:
    def _resolve_grid(self, samples) -> np.ndarray:
        if self.grid is not None:
            return check_grid(self.grid)
        return _infer_grid(samples)

    def _resolve_basis(self, grid):
        return open_uniform_basis(self.num_basis, grid[0], grid[-1])

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise DataError("estimator is not fitted; call fit first")


class MagicClassifier( _GridBasisMixin, ClassifierMixin, BaseEstimator):
    """Joint imputation-classification via the hierarchical GP model."""

    def __init__(self, grid=None, num_basis=8, lam=1.0, roughness_weight=1.0,
                 epsilon=1e-4, max_iters=100, mean0=None, mean1=None, bounds=None):
        self.grid = grid
        self.num_basis = num_basis
        self.lam = lam
        self.roughness_weight = roughness_weight
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.mean0 = mean0
        self.mean1 = mean1
        self.bounds = bounds

    def fit(self, X, y):
        samples = _as_samples(X, y)
        grid = self._resolve_grid(samples)
        basis = self._resolve_basis(grid)
        state = fit(
            samples, grid, basis=basis, lam=self.lam,
            roughness_weight=self.roughness_weight, mean0=self.mean0, mean1=self.mean1,
            epsilon=self.epsilon, max_iters=self.max_iters,
            bounds=self.bounds or HyperBounds(),
        )
        labels = [s.label for s in samples]
        self.model_ = MagicModel.from_state(
            state, grid, basis, prior=ClassPrior.from_labels(labels)
        )
        self.state_ = state
        self.classes_ = np.array([0, 1])
        return self

    def _results(self, X):
        self._check_fitted()
        samples = _as_samples(X)
        return [predict_sample(self.model_, s) for s in samples]

    def predict(self, X):
        return np.array([r.assigned_class for r in self._results(X)])

    def predict_proba(self, X):
        p1 = np.array([r.probability for r in self._results(X)])
        return np.column_stack([1.0 - p1, p1])

    def impute(self, X):
        """Completed curves and per-point variances, one pair per sample."""
        return [(r.curve, r.variance) for r in self._results(X)]


class _BaselineClassifier(_GridBasisMixin, ClassifierMixin, BaseEstimator):
    """Shared plumbing for the single-GP and common-mean baselines."""

    def _fit_model(self, samples, grid, basis):
        raise NotImplementedError

    def fit(self, X, y):
        samples = _as_samples(X, y)
        grid = self._resolve_grid(samples)
        basis = self._resolve_basis(grid)
        self.model_ = self._fit_model(samples, grid, basis)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        self._check_fitted()
        samples = _as_samples(X)
        p1 = np.array([self.model_.predict_proba_sample(s) for s in samples])
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)

    def impute(self, X):
        self._check_fitted()
        samples = _as_samples(X)
        return [self.model_.impute(s) for s in samples]


class SgpClassifier(_BaselineClassifier):
    """Independent per-sample GP completion followed by logistic regression."""

    def __init__(self, grid=None, num_basis=8, lam=1.0, share_hyperparams=True,
                 prior_mean=None, bounds=None):
        self.grid = grid
        self.num_basis = num_basis
        self.lam = lam
        self.share_hyperparams = share_hyperparams
        self.prior_mean = prior_mean
        self.bounds = bounds

    def _fit_model(self, samples, grid, basis):
        return fit_sgp(
            samples, grid, basis, self.lam, bounds=self.bounds or HyperBounds(),
            prior_mean=self.prior_mean, share_hyperparams=self.share_hyperparams,
        )


class MtgpClassifier(_BaselineClassifier):
    """Common-mean multi-task GP completion followed by logistic regression."""

    def __init__(self, grid=None, num_basis=8, lam=1.0, roughness_weight=0.0,
                 prior_mean=None, epsilon=1e-4, max_iters=100, bounds=None):
        self.grid = grid
        self.num_basis = num_basis
        self.lam = lam
        self.roughness_weight = roughness_weight
        self.prior_mean = prior_mean
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.bounds = bounds

    def _fit_model(self, samples, grid, basis):
        return fit_mtgp(
            samples, grid, basis, self.lam, roughness_weight=self.roughness_weight,
            bounds=self.bounds or HyperBounds(), prior_mean=self.prior_mean,
            epsilon=self.epsilon, max_iters=self.max_iters,
        )
