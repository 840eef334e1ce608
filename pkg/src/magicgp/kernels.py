"""RBF covariance kernels on time grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class KernelParams:
    """RBF hyperparameters: signal amplitude and length scale, both positive."""

    amplitude: float
    length_scale: float

    def __post_init__(self):
        for name in ("amplitude", "length_scale"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidParameterError(f"{name} must be a real number, got {value!r}") from None
            if not np.isfinite(value) or value <= 0.0:
                raise InvalidParameterError(f"{name} must be finite and positive, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.amplitude, self.length_scale])


def rbf_kernel_matrix(params: KernelParams, times_a, times_b=None) -> np.ndarray:
    """k(a_i, b_j) = amplitude^2 * exp(-(a_i - b_j)^2 / (2 length_scale^2)).

    With ``times_b`` omitted, the grid is paired with itself; the result is
    then symmetric PSD with diagonal exactly amplitude^2.
    """
    if not isinstance(params, KernelParams):
        params = KernelParams(*params)
    a = np.asarray(times_a, dtype=float)
    b = a if times_b is None else np.asarray(times_b, dtype=float)
    d = (a[:, None] - b[None, :]) / params.length_scale
    return params.amplitude**2 * np.exp(-0.5 * d * d)
