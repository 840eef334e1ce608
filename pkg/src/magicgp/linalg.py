"""Stabilized symmetric positive definite linear algebra.

Two factorization schedules are used deliberately:

* ``chol_factor`` (and everything built on it) tries the matrix as given and
  only on failure escalates a diagonal jitter geometrically from 1e-10 to
  1e-4, scaled by the mean absolute diagonal. Exact, test-facing paths
  (posteriors, predictions, objective bookkeeping) use this so well
  conditioned inputs are factorized unperturbed.
* ``chol_smooth`` adds a small relative jitter unconditionally before
  factorizing. Optimizer objectives use it so that finite-difference
  gradients never straddle a discontinuity created by the escalation level
  flipping between two nearby evaluations.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from .errors import SingularMatrixError

JITTER_START = 1e-10
JITTER_STOP = 1e-4
SMOOTH_JITTER = 1e-8

_LADDER = tuple(10.0**e for e in range(-10, -3))


def _diag_scale(a: np.ndarray):
    """Mean absolute diagonal per matrix (stack-aware); zero maps to one."""
    d = np.abs(np.diagonal(a, axis1=-2, axis2=-1)).mean(axis=-1)
    return np.where(d > 0, d, 1.0)


def _add_jitter(a: np.ndarray, amount) -> np.ndarray:
    eye = np.eye(a.shape[-1])
    if a.ndim == 2:
        return a + float(amount) * eye
    return a + np.asarray(amount)[:, None, None] * eye


def chol_factor(a: np.ndarray):
    """Lower Cholesky factor with escalating jitter; returns (L, jitter_used)."""
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(_diag_scale(a))
    for level in _LADDER:
        try:
            return np.linalg.cholesky(_add_jitter(a, level * scale)), level * scale
        except np.linalg.LinAlgError:
            continue
    raise SingularMatrixError(
        f"Cholesky factorization failed for a {a.shape[-1]}x{a.shape[-1]} matrix "
        f"after diagonal jitter up to {JITTER_STOP * scale:.3e}"
    )


def chol_batched(a: np.ndarray):
    """Stacked lower Cholesky, bare first, per-matrix jitter ladder on failure.

    Returns (L, jitter) with jitter per matrix in the stack.
    """
    try:
        return np.linalg.cholesky(a), np.zeros(a.shape[0])
    except np.linalg.LinAlgError:
        pass
    chols = np.empty_like(a)
    jit = np.zeros(a.shape[0])
    for g in range(a.shape[0]):
        chols[g], jit[g] = chol_factor(a[g])
    return chols, jit


def chol_smooth(a: np.ndarray, rel: float = SMOOTH_JITTER):
    """Stack-aware Cholesky with an always-on relative jitter (see module doc).

    Returns (L, jitter) where jitter has the stack's leading shape.
    """
    scale = _diag_scale(a)
    level = rel
    while level <= JITTER_STOP * 1.01:
        try:
            amount = level * scale
            return np.linalg.cholesky(_add_jitter(a, amount)), amount
        except np.linalg.LinAlgError:
            level *= 10.0
    raise SingularMatrixError(
        f"Cholesky factorization failed for a {a.shape[-1]}x{a.shape[-1]} matrix "
        f"after diagonal jitter up to {JITTER_STOP:.0e} relative"
    )


def stabilized_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric (PSD up to jitter) ``a``."""
    low, _ = chol_factor(np.asarray(a, dtype=float))
    return cho_solve((low, True), np.asarray(b, dtype=float))


def solve_from_chol(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cho_solve((low, True), b)


def logdet_from_chol(low: np.ndarray):
    """Log-determinant(s) from lower Cholesky factor(s); stack-aware."""
    return 2.0 * np.log(np.diagonal(low, axis1=-2, axis2=-1)).sum(axis=-1)


def log_det(a: np.ndarray) -> float:
    """Stable log-determinant of a symmetric PSD matrix via Cholesky."""
    low, _ = chol_factor(np.asarray(a, dtype=float))
    return float(logdet_from_chol(low))


def inv_spd(a: np.ndarray, smooth: bool = False) -> np.ndarray:
    """Symmetric inverse of an SPD matrix under the selected jitter schedule."""
    a = np.asarray(a, dtype=float)
    if smooth:
        low, _ = chol_smooth(a)
    else:
        low, _ = chol_factor(a)
    inv = cho_solve((low, True), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)
