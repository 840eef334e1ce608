import numpy as np
import pytest

import oracles
from conftest import random_small_instance
from magicgp.basis import open_uniform_basis
from magicgp.logistic import LogisticCoefficients
from magicgp.model import compute_moments, e_step
from magicgp.series import SampleSeries
from magicgp.validation import grid_indices


def oracle_moments(sample, post, params, grid, basis_cfg):
    """Rebuild (U, V) from scratch: plain inverses, scipy basis, raw trapezoid."""
    n = grid.size
    obs = grid_indices(sample.times, grid)
    un = np.array([i for i in range(n) if i not in set(obs.tolist())], dtype=int)
    k_dev = oracles.rbf(params.theta.amplitude, params.theta.length_scale, grid)

    fbar = np.zeros(n)
    fbar[obs] = sample.values
    c_full = np.zeros((n, n))
    if un.size:
        if obs.size:
            a = k_dev[np.ix_(obs, obs)] + params.sigma2 * np.eye(obs.size)
            b = k_dev[np.ix_(un, obs)] @ np.linalg.inv(a)
            fbar[un] = post.mean[un] + b @ (sample.values - post.mean[obs])
            c_uu = (
                post.cov[np.ix_(un, un)]
                - b @ post.cov[np.ix_(obs, un)]
                - post.cov[np.ix_(un, obs)] @ b.T
                + b @ post.cov[np.ix_(obs, obs)] @ b.T
            )
        else:
            fbar[un] = post.mean[un]
            c_uu = post.cov[np.ix_(un, un)]
        c_full[np.ix_(un, un)] = c_uu

    # quadrature from scipy's basis and hand-built trapezoid weights
    w = np.zeros(n)
    w[0] = 0.5 * (grid[1] - grid[0])
    w[-1] = 0.5 * (grid[-1] - grid[-2])
    if n > 2:
        w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
    phi = oracles.bspline_design(basis_cfg.knots, 3, grid)  # (n, K)
    q = phi.T * w[None, :]
    u_val = params.coeffs.intercept + float(params.coeffs.weights @ (q @ fbar))
    v_val = float(params.coeffs.weights @ (q @ c_full @ q.T) @ params.coeffs.weights)
    return u_val, max(v_val, 0.0)


def with_coeffs(params, rng, k):
    from dataclasses import replace

    return replace(
        params, coeffs=LogisticCoefficients(rng.normal(), rng.normal(size=k))
    )


class TestComputeMomentsAgainstOracle:
    def test_random_instances(self, rng):
        for _ in range(30):
            grid, params, samples = random_small_instance(rng)
            basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
            params = with_coeffs(params, rng, 4)
            post0, post1 = e_step(samples, grid, params)
            for s in samples:
                post = post0 if s.label == 0 else post1
                m = compute_moments(s, post, params, grid, basis_cfg)
                u_ref, v_ref = oracle_moments(s, post, params, grid, basis_cfg)
                assert m.u == pytest.approx(u_ref, abs=1e-9)
                assert m.v == pytest.approx(v_ref, abs=1e-9)

    def test_fully_observed_sample_has_zero_variance(self, rng):
        grid, params, samples = random_small_instance(rng, allow_partial=False)
        basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
        params = with_coeffs(params, rng, 4)
        post0, _ = e_step(samples, grid, params)
        s = samples[0]
        m = compute_moments(s, post0, params, grid, basis_cfg)
        assert m.v == 0.0
        u_ref, _ = oracle_moments(s, post0, params, grid, basis_cfg)
        assert m.u == pytest.approx(u_ref, abs=1e-10)

    def test_empty_sample_uses_posterior_wholesale(self, rng):
        grid, params, samples = random_small_instance(rng)
        basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
        params = with_coeffs(params, rng, 4)
        post0, _ = e_step(samples, grid, params)
        empty = SampleSeries("none", [], [], label=0)
        m = compute_moments(empty, post0, params, grid, basis_cfg)
        u_ref, v_ref = oracle_moments(empty, post0, params, grid, basis_cfg)
        assert m.u == pytest.approx(u_ref, abs=1e-9)
        assert m.v == pytest.approx(v_ref, abs=1e-9)
        assert m.v > 0.0

    def test_zero_weights_give_intercept_and_no_variance(self, rng):
        from dataclasses import replace

        grid, params, samples = random_small_instance(rng)
        basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
        params = replace(params, coeffs=LogisticCoefficients(0.73, np.zeros(4)))
        post0, _ = e_step(samples, grid, params)
        m = compute_moments(samples[0], post0, params, grid, basis_cfg)
        assert m.u == pytest.approx(0.73, abs=1e-12)
        assert m.v == 0.0

    def test_observed_values_pass_into_covariate_unchanged(self, rng):
        # doubling an observed value moves U by the matching quadrature term
        grid, params, samples = random_small_instance(rng, allow_partial=False)
        basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
        params = with_coeffs(params, rng, 4)
        post0, _ = e_step(samples, grid, params)
        s = samples[0]
        m1 = compute_moments(s, post0, params, grid, basis_cfg)
        bumped = SampleSeries(s.id, s.times, s.values + np.eye(len(grid))[0], s.label)
        m2 = compute_moments(bumped, post0, params, grid, basis_cfg)
        w0 = 0.5 * (grid[1] - grid[0])
        phi0 = oracles.bspline_design(basis_cfg.knots, 3, grid[:1])[0]
        expect = float(params.coeffs.weights @ (phi0 * w0))
        assert m2.u - m1.u == pytest.approx(expect, abs=1e-10)
