import numpy as np
import pytest

import oracles
from conftest import random_small_instance
from magicgp.errors import DataError
from magicgp.kernels import rbf_kernel_matrix
from magicgp.model import build_roughness, e_step
from magicgp.validation import grid_indices


def dense_reference(grid, params, samples, z, weight=0.0):
    """Joint-Gaussian conditioning route for one class-mean posterior."""
    k_prior = oracles.rbf(
        params.class_kernel(z).amplitude, params.class_kernel(z).length_scale, grid
    )
    k_dev = oracles.rbf(params.theta.amplitude, params.theta.length_scale, grid)
    prior_mean = params.class_mean(z)
    if weight > 0:
        dmat = build_roughness(grid, 1.0).dmat
        prior_mean, k_prior = oracles.penalized_prior(k_prior, prior_mean, dmat, weight)
    obs_list = [
        (grid_indices(s.times, grid), s.values) for s in samples if s.label == z
    ]
    return oracles.mean_posterior_dense(
        grid, prior_mean, k_prior, obs_list, k_dev, params.sigma2
    )


class TestEStepAgainstDenseOracle:
    def test_many_random_instances_no_penalty(self, rng):
        for _ in range(40):
            grid, params, samples = random_small_instance(rng)
            post0, post1 = e_step(samples, grid, params)
            for z, post in ((0, post0), (1, post1)):
                ref_mean, ref_cov = dense_reference(grid, params, samples, z)
                np.testing.assert_allclose(post.mean, ref_mean, atol=1e-8)
                np.testing.assert_allclose(post.cov, ref_cov, atol=1e-8)

    def test_many_random_instances_with_penalty(self, rng):
        for _ in range(25):
            grid, params, samples = random_small_instance(rng)
            weight = float(rng.uniform(0.1, 3.0))
            penalty = build_roughness(grid, weight)
            post0, post1 = e_step(samples, grid, params, penalty)
            for z, post in ((0, post0), (1, post1)):
                ref_mean, ref_cov = dense_reference(grid, params, samples, z, weight)
                np.testing.assert_allclose(post.mean, ref_mean, atol=1e-8)
                np.testing.assert_allclose(post.cov, ref_cov, atol=1e-8)

    def test_partially_observed_samples_use_only_observed_rows(self, rng):
        # a sample observed at a strict subset contributes exactly through
        # that subset: the oracle is built from the subset alone
        grid, params, samples = random_small_instance(rng, allow_partial=False)
        partial = samples[0]
        keep = np.array([0, len(grid) - 1])
        samples[0] = type(partial)(partial.id, grid[keep], partial.values[keep], partial.label)
        post0, _ = e_step(samples, grid, params)
        ref_mean, ref_cov = dense_reference(grid, params, samples, 0)
        np.testing.assert_allclose(post0.mean, ref_mean, atol=1e-8)
        np.testing.assert_allclose(post0.cov, ref_cov, atol=1e-8)


class TestEStepEdgeCases:
    def test_empty_class_reproduces_prior_exactly(self, rng):
        grid, params, samples = random_small_instance(rng)
        only_ones = [s.with_label(1) for s in samples]
        with pytest.warns(RuntimeWarning, match="class 0 has no samples"):
            post0, _ = e_step(only_ones, grid, params)
        np.testing.assert_array_equal(post0.mean, params.mean0)
        k_prior = rbf_kernel_matrix(params.theta0, grid)
        np.testing.assert_allclose(post0.cov, k_prior, atol=1e-12)

    def test_empty_class_with_penalty_gets_penalized_prior(self, rng):
        grid, params, samples = random_small_instance(rng)
        penalty = build_roughness(grid, 0.7)
        only_ones = [s.with_label(1) for s in samples]
        with pytest.warns(RuntimeWarning):
            post0, _ = e_step(only_ones, grid, params, penalty)
        k_prior = rbf_kernel_matrix(params.theta0, grid)
        ref_mean, ref_cov = oracles.penalized_prior(
            k_prior, params.mean0, penalty.dmat, 0.7
        )
        np.testing.assert_allclose(post0.mean, ref_mean, atol=1e-9)
        np.testing.assert_allclose(post0.cov, ref_cov, atol=1e-9)

    def test_sample_order_irrelevant(self, rng):
        grid, params, samples = random_small_instance(rng)
        post_a = e_step(samples, grid, params)
        post_b = e_step(samples[::-1], grid, params)
        for a, b in zip(post_a, post_b):
            np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
            np.testing.assert_allclose(a.cov, b.cov, atol=1e-12)

    def test_unlabeled_sample_rejected(self, rng):
        grid, params, samples = random_small_instance(rng)
        samples[0] = samples[0].with_label(None)
        with pytest.raises(DataError, match="label"):
            e_step(samples, grid, params)

    def test_off_grid_time_rejected(self, rng):
        grid, params, samples = random_small_instance(rng)
        bad = type(samples[0])("bad", [grid[0] + 0.37 * (grid[1] - grid[0])], [1.0], 1)
        with pytest.raises(DataError, match="not on the grid"):
            e_step(samples + [bad], grid, params)

    def test_posterior_contracts_with_more_data(self, rng):
        # replicating the dataset shrinks the posterior covariance
        grid, params, samples = random_small_instance(rng)
        post_once, _ = e_step(samples, grid, params)
        post_twice, _ = e_step(
            samples + [type(s)(s.id + "b", s.times, s.values, s.label) for s in samples],
            grid,
            params,
        )
        assert np.trace(post_twice.cov) < np.trace(post_once.cov) + 1e-12
