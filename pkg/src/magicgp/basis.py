"""Cubic B-spline basis with open uniform knots, plus grid quadrature.

The basis carries the functional logistic regression: covariates are
trapezoid-quadrature integrals of basis functions against curves defined on
the global grid, and covariance surfaces are projected by the matching double
integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParameterError
from .validation import check_grid, check_symmetric

DEGREE = 3  # cubic


@dataclass(frozen=True)
class BasisConfig:
    """Open uniform cubic B-spline basis over a closed interval.

    ``knots`` has length num_basis + 4 with the first and last knot repeated
    four times; num_basis must be at least 4 (degree + 1).
    """

    num_basis: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = int(self.num_basis)
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        if k < DEGREE + 1:
            raise InvalidParameterError(f"num_basis must be at least {DEGREE + 1}, got {k}")
        if knots.size != k + DEGREE + 1:
            raise InvalidParameterError(
                f"knot vector must have num_basis + {DEGREE + 1} entries, "
                f"got {knots.size} for num_basis={k}"
            )
        if not np.all(np.isfinite(knots)):
            raise InvalidParameterError("knot vector contains non-finite entries")
        if np.any(np.diff(knots) < 0):
            raise InvalidParameterError("knot vector must be non-decreasing")
        first, last = knots[0], knots[-1]
        if not (np.all(knots[: DEGREE + 1] == first) and np.all(knots[-(DEGREE + 1):] == last)):
            raise InvalidParameterError("first and last knots must be repeated four times (open)")
        if first >= last:
            raise InvalidParameterError("knot span must have positive length")
        object.__setattr__(self, "num_basis", k)
        object.__setattr__(self, "knots", knots)

    @property
    def t_min(self) -> float:
        return float(self.knots[0])

    @property
    def t_max(self) -> float:
        return float(self.knots[-1])


def open_uniform_basis(num_basis: int, t_min: float, t_max: float) -> BasisConfig:
    """Open uniform cubic knots: repeated ends, evenly spaced interior."""
    if not (np.isfinite(t_min) and np.isfinite(t_max) and t_min < t_max):
        raise InvalidParameterError(f"invalid basis span [{t_min!r}, {t_max!r}]")
    k = int(num_basis)
    if k < DEGREE + 1:
        raise InvalidParameterError(f"num_basis must be at least {DEGREE + 1}, got {num_basis}")
    interior = np.linspace(t_min, t_max, k - DEGREE + 1)[1:-1]
    knots = np.concatenate([np.full(DEGREE + 1, t_min), interior, np.full(DEGREE + 1, t_max)])
    return BasisConfig(k, knots)


def basis_eval(config: BasisConfig, times) -> np.ndarray:
    """Evaluate all basis functions by the Cox-de Boor recursion.

    Accepts a scalar (returns shape (K,)) or a 1-D array (returns (m, K)).
    The right endpoint is closed: the last basis function takes value 1 there.
    Points outside the knot span raise a domain error.
    """
    scalar = np.isscalar(times) or np.ndim(times) == 0
    x = np.atleast_1d(np.asarray(times, dtype=float))
    t = config.knots
    if x.size and (x.min() < t[0] or x.max() > t[-1]):
        raise DomainError(
            f"evaluation points must lie within the knot span [{t[0]:g}, {t[-1]:g}]"
        )
    n0 = config.num_basis + DEGREE  # number of degree-0 functions
    b = np.zeros((x.size, n0))
    for j in range(n0):
        if t[j + 1] > t[j]:
            b[:, j] = (x >= t[j]) & (x < t[j + 1])
    b[x == t[-1], config.num_basis - 1] = 1.0  # close the right endpoint
    for d in range(1, DEGREE + 1):
        nb = n0 - d
        out = np.zeros((x.size, nb))
        for j in range(nb):
            den1 = t[j + d] - t[j]
            den2 = t[j + d + 1] - t[j + 1]
            acc = 0.0
            if den1 > 0:
                acc = (x - t[j]) / den1 * b[:, j]
            if den2 > 0:
                acc = acc + (t[j + d + 1] - x) / den2 * b[:, j + 1]
            out[:, j] = acc
        b = out
    return b[0] if scalar else b


def trapezoid_weights(grid) -> np.ndarray:
    """Composite trapezoid quadrature weights for a (possibly uneven) grid."""
    grid = check_grid(grid)
    if grid.size < 2:
        raise InvalidParameterError("quadrature requires a grid of at least 2 points")
    w = np.zeros(grid.size)
    w[0] = 0.5 * (grid[1] - grid[0])
    w[-1] = 0.5 * (grid[-1] - grid[-2])
    if grid.size > 2:
        w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
    return w


def basis_quadrature(config: BasisConfig, grid) -> np.ndarray:
    """Matrix Q of shape (K, n) with Q @ f = trapezoid integrals of phi_k * f."""
    grid = check_grid(grid)
    w = trapezoid_weights(grid)
    phi = basis_eval(config, grid)  # (n, K)
    return phi.T * w[None, :]


def functional_covariate(values, grid, config: BasisConfig) -> np.ndarray:
    """Covariate x = [1, integral of phi_1 f, ..., integral of phi_K f].

    ``values`` must be a complete curve on the global grid.
    """
    grid = check_grid(grid)
    f = np.asarray(values, dtype=float).reshape(-1)
    if f.size != grid.size:
        raise InvalidParameterError(
            f"curve length {f.size} does not match grid length {grid.size}"
        )
    q = basis_quadrature(config, grid)
    return np.concatenate([[1.0], q @ f])


def weighted_double_integral(c_surface, grid, config: BasisConfig) -> np.ndarray:
    """Double trapezoid integral of phi(t) C(t,t') phi(t')^T; (K, K), symmetric."""
    grid = check_grid(grid)
    c = check_symmetric(c_surface, name="covariance surface")
    if c.shape[0] != grid.size:
        raise InvalidParameterError(
            f"surface shape {c.shape} does not match grid length {grid.size}"
        )
    q = basis_quadrature(config, grid)
    out = q @ c @ q.T
    return 0.5 * (out + out.T)
