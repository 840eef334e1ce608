"""Bound-constrained quasi-Newton maximization."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .errors import OptimizerFailure

FD_STEP = 1e-6
GRAD_TOL = 1e-6
MAX_ITERS = 200
_BIG = 1e20


def bounded_quasi_newton(objective, x0, bounds, *, gtol: float = GRAD_TOL,
                         maxiter: int = MAX_ITERS, fd_step: float = FD_STEP):
    """Maximize ``objective`` over a box via L-BFGS-B.

    Gradients are central finite differences with per-coordinate step
    fd_step * max(1, |x_j|), with sample points clamped into the box.
    Non-finite objective values are mapped to a large penalty so the line
    search backtracks. Returns (x, value, info).

    Parameters
    ----------
    objective : callable mapping a parameter vector to a scalar
    x0 : initial point, clipped into the box
    bounds : sequence of (low, high) pairs; None entries mean unbounded
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if bounds is None:
        bounds = [(None, None)] * x0.size
    bounds = list(bounds)
    if len(bounds) != x0.size:
        raise OptimizerFailure(f"got {len(bounds)} bounds for {x0.size} coordinates")
    lo = np.array([-np.inf if b[0] is None else float(b[0]) for b in bounds])
    hi = np.array([np.inf if b[1] is None else float(b[1]) for b in bounds])
    if np.any(lo > hi):
        raise OptimizerFailure("lower bound exceeds upper bound")
    x0 = np.clip(x0, lo, hi)

    def neg(x):
        value = objective(np.asarray(x, dtype=float))
        if not np.isfinite(value):
            return _BIG
        return -float(value)

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        for j in range(x.size):
            h = fd_step * max(1.0, abs(x[j]))
            up = min(x[j] + h, hi[j])
            dn = max(x[j] - h, lo[j])
            if up <= dn:
                continue
            xu = x.copy()
            xu[j] = up
            xd = x.copy()
            xd[j] = dn
            g[j] = (neg(xu) - neg(xd)) / (up - dn)
        return g

    f0 = neg(x0)
    if f0 >= _BIG:
        raise OptimizerFailure("objective is not finite at the starting point")

    result = minimize(
        neg,
        x0,
        jac=grad,
        method="L-BFGS-B",
        bounds=[(None if np.isneginf(a) else a, None if np.isposinf(b) else b)
                for a, b in zip(lo, hi)],
        options={"maxiter": maxiter, "gtol": gtol},
    )
    x_best, f_best = result.x, -float(result.fun)
    if not np.isfinite(f_best) or f_best <= -_BIG:
        # the search never escaped the non-finite region; fall back to x0
        x_best, f_best = x0, -f0
        if not np.isfinite(f_best):
            raise OptimizerFailure("optimizer could not produce a finite objective value")
    info = {
        "converged": bool(result.success),
        "message": str(result.message),
        "n_iter": int(result.nit),
        "n_eval": int(result.nfev),
    }
    return np.asarray(x_best, dtype=float), float(f_best), info
