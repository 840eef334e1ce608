"""Synthetic two-class dataset generator and bin-based missingness.

Each class draws one latent mean trajectory from a GP around a configured
mean function; every sample adds an individual GP deviation plus i.i.d.
observation noise on the full grid. Missingness keeps round((1-alpha)*n)
points, one uniformly chosen per equal-width index bin, so retained points
cover the whole span.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, InvalidParameterError
from .kernels import KernelParams, rbf_kernel_matrix
from .series import SampleSeries
from .validation import check_grid

DEFAULT_PER_CLASS = 75
DEFAULT_SIGMA = 0.01

MEAN_PRESETS = ("default", "slow", "zero")


def default_mean0(t):
    """sin(pi t / 2): alternates through {0, +/-1} on integer grids."""
    return np.sin(0.5 * np.pi * np.asarray(t, dtype=float))


def default_mean1(t):
    return -default_mean0(t)


def slow_mean0(t):
    """Half sine spanning [0, 50], one slow arch over the whole domain."""
    return np.sin(np.pi * np.asarray(t, dtype=float) / 50.0)


def slow_mean1(t):
    return -slow_mean0(t)


def _zero(t):
    return np.zeros(np.asarray(t, dtype=float).shape)


@dataclass(frozen=True)
class SimConfig:
    """Generator settings: grid, class mean functions, three kernels, noise
    standard deviation, per-class sample count, and seed."""

    grid: np.ndarray = field(default_factory=lambda: np.arange(51, dtype=float))
    mean0: callable = default_mean0
    mean1: callable = default_mean1
    theta0: KernelParams = KernelParams(1.0, 50.0)
    theta1: KernelParams = KernelParams(1.0, 50.0)
    theta: KernelParams = KernelParams(10.0, 100.0)
    sigma: float = DEFAULT_SIGMA
    per_class: int = DEFAULT_PER_CLASS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid", check_grid(self.grid))
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")
        if int(self.per_class) < 1:
            raise InvalidParameterError(f"per_class must be at least 1, got {self.per_class!r}")
        object.__setattr__(self, "per_class", int(self.per_class))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def with_preset(cls, preset: str = "default", **kwargs) -> "SimConfig":
        if preset not in MEAN_PRESETS:
            raise InvalidParameterError(
                f"unknown mean preset {preset!r}; choose one of {MEAN_PRESETS}"
            )
        means = {
            "default": (default_mean0, default_mean1),
            "slow": (slow_mean0, slow_mean1),
            "zero": (_zero, _zero),
        }[preset]
        return cls(mean0=means[0], mean1=means[1], **kwargs)

    def class_mean_values(self, z: int) -> np.ndarray:
        fn = self.mean0 if z == 0 else self.mean1
        return np.asarray(fn(self.grid), dtype=float).reshape(-1)


@dataclass(frozen=True)
class SimTruth:
    """Latent ground truth: the two drawn class means and every sample's
    complete (pre-masking) value curve keyed by sample id."""

    class_means: tuple
    complete: dict


def sample_gaussian(rng: np.random.Generator, mean, cov, size: int = 1) -> np.ndarray:
    """Draw from N(mean, cov) via an eigendecomposition square root.

    Handles the numerically rank-deficient covariances that long length
    scales produce: negative roundoff eigenvalues are clipped to zero.
    Returns shape (size, n).
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    eps = rng.standard_normal((size, mean.size))
    return mean + eps @ root.T


def generate_dataset(config: SimConfig, rng: np.random.Generator | None = None):
    """Complete labeled dataset plus latent truth.

    Per class: one latent mean draw from GP(mean_z, K_theta_z), then
    ``per_class`` samples, each the latent mean plus an individual GP
    deviation (kernel theta) plus N(0, sigma^2) noise at every grid point.
    Deterministic given the generator state; class 0 is drawn first.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    grid = config.grid
    n = grid.size
    dev_cov = rbf_kernel_matrix(config.theta, grid)
    samples = []
    class_means = []
    complete = {}
    counter = 0
    for z in (0, 1):
        kern = config.theta0 if z == 0 else config.theta1
        mean_cov = rbf_kernel_matrix(kern, grid)
        mu = sample_gaussian(rng, config.class_mean_values(z), mean_cov, size=1)[0]
        class_means.append(mu)
        devs = sample_gaussian(rng, np.zeros(n), dev_cov, size=config.per_class)
        noise = config.sigma * rng.standard_normal((config.per_class, n))
        values = mu + devs + noise
        for i in range(config.per_class):
            sid = f"sim-{counter:03d}"
            counter += 1
            samples.append(SampleSeries(id=sid, times=grid, values=values[i], label=z))
            complete[sid] = values[i].copy()
    return samples, SimTruth(class_means=tuple(class_means), complete=complete)


def kept_count(n: int, alpha: float) -> int:
    """round((1-alpha)*n) with halves rounding up."""
    return int(np.floor((1.0 - alpha) * n + 0.5))


def apply_missingness(sample: SampleSeries, alpha: float, rng) -> SampleSeries:
    """Sparsify a sample: keep one uniformly random point per equal-width
    index bin, with round((1-alpha)*n) bins.

    ``rng`` is a numpy Generator or an integer seed. alpha=0 keeps the sample
    unchanged; a kept count of zero raises a data error.
    """
    if not np.isfinite(alpha) or not (0.0 <= alpha < 1.0):
        raise InvalidParameterError(f"alpha must lie in [0, 1), got {alpha!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = sample.n_obs
    kept = kept_count(n, alpha)
    if kept < 1:
        raise DataError(
            f"alpha={alpha} leaves zero of the {n} points of sample {sample.id!r}"
        )
    edges = np.floor(np.arange(kept + 1) * (n / kept)).astype(int)
    keep_idx = np.array(
        [int(rng.integers(edges[j], edges[j + 1])) for j in range(kept)], dtype=np.intp
    )
    return replace(sample, times=sample.times[keep_idx], values=sample.values[keep_idx])
