"""Shared fixtures: seeded rngs and random small problem instances."""

from __future__ import annotations

import numpy as np
import pytest

from magicgp.kernels import KernelParams, rbf_kernel_matrix
from magicgp.model import ModelParams
from magicgp.series import SampleSeries


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def random_small_instance(rng, *, max_grid=6, max_per_class=4, allow_partial=True):
    """A random, well-conditioned problem small enough for dense oracles."""
    n = int(rng.integers(3, max_grid + 1))
    start = float(rng.uniform(-2.0, 2.0))
    step = float(rng.uniform(0.3, 1.5))
    grid = start + step * np.arange(n)

    def kp(lo, hi):
        return KernelParams(
            amplitude=float(rng.uniform(0.5, 2.0)),
            length_scale=float(rng.uniform(lo, hi) * step * n),
        )

    params = ModelParams(
        theta0=kp(0.2, 0.8),
        theta1=kp(0.2, 0.8),
        theta=kp(0.1, 0.6),
        sigma2=float(rng.uniform(0.05, 0.5)),
        coeffs=np.zeros(2),
        mean0=rng.normal(size=n),
        mean1=rng.normal(size=n),
    )

    samples = []
    idx = 0
    for z in (0, 1):
        count = int(rng.integers(1, max_per_class + 1))
        mean = params.class_mean(z)
        cov = (
            rbf_kernel_matrix(params.class_kernel(z), grid)
            + rbf_kernel_matrix(params.theta, grid)
            + params.sigma2 * np.eye(n)
        )
        chol = np.linalg.cholesky(cov + 1e-10 * np.eye(n))
        for _ in range(count):
            y = mean + chol @ rng.standard_normal(n)
            if allow_partial and rng.random() < 0.5 and n >= 3:
                k = int(rng.integers(1, n))
                keep = np.sort(rng.choice(n, size=k, replace=False))
            else:
                keep = np.arange(n)
            samples.append(SampleSeries(f"s{idx}", grid[keep], y[keep], label=z))
            idx += 1
    return grid, params, samples


@pytest.fixture
def small_instance(rng):
    return random_small_instance(rng)
