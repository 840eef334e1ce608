"""Input validation helpers shared by the functional and estimator layers."""

from __future__ import annotations

import numpy as np

from .errors import DataError, DegenerateLabelsError, InvalidParameterError

GRID_SNAP_TOL = 1e-9


def as_float_vector(x, name: str = "array", allow_empty: bool = True) -> np.ndarray:
    """Coerce to a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InvalidParameterError(f"{name} must not be empty")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return arr


def as_float_matrix(x, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise InvalidParameterError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return arr


def check_grid(points, name: str = "grid") -> np.ndarray:
    """Validate a global time grid: finite, non-empty, strictly increasing."""
    grid = as_float_vector(points, name=name, allow_empty=False)
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise InvalidParameterError(f"{name} must be strictly increasing")
    return grid


def check_symmetric(a, name: str = "matrix", tol: float = 1e-8) -> np.ndarray:
    """Require symmetry within ``tol`` (relative) and return the symmetrized matrix."""
    mat = as_float_matrix(a, name=name)
    if mat.shape[0] != mat.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {mat.shape}")
    if mat.size:
        scale = max(float(np.abs(mat).max()), 1.0)
        if float(np.abs(mat - mat.T).max()) > tol * scale:
            raise InvalidParameterError(f"{name} is asymmetric beyond tolerance {tol:g}")
    return 0.5 * (mat + mat.T)


def grid_indices(times, grid: np.ndarray, tol: float = GRID_SNAP_TOL) -> np.ndarray:
    """Map time stamps onto grid indices, requiring each to sit within ``tol``.

    Raises DataError naming the first offending time stamp.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty(0, dtype=np.intp)
    pos = np.searchsorted(grid, times)
    left = np.clip(pos - 1, 0, grid.size - 1)
    right = np.clip(pos, 0, grid.size - 1)
    use_right = np.abs(grid[right] - times) <= np.abs(grid[left] - times)
    idx = np.where(use_right, right, left)
    off = np.abs(grid[idx] - times)
    bad = np.nonzero(off > tol)[0]
    if bad.size:
        j = int(bad[0])
        raise DataError(
            f"time stamp {times[j]!r} is not on the grid (nearest point {grid[idx[j]]!r}, "
            f"offset {off[j]:.3g} exceeds tolerance {tol:g})"
        )
    return idx.astype(np.intp)


def check_binary_labels(labels, require_both: bool = True) -> np.ndarray:
    """Validate an integer {0,1} label vector."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InvalidParameterError(f"labels must be one-dimensional, got shape {arr.shape}")
    vals = set(np.unique(arr).tolist())
    if not vals <= {0, 1}:
        raise DataError(f"labels must be 0 or 1, found {sorted(vals - {0, 1})}")
    if require_both and vals != {0, 1}:
        raise DegenerateLabelsError("training data must contain both classes")
    return arr.astype(int)
