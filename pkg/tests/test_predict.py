import numpy as np
import pytest
from scipy.special import expit

import oracles
from conftest import random_small_instance
from magicgp.basis import functional_covariate, open_uniform_basis
from magicgp.errors import InvalidParameterError
from magicgp.logistic import LogisticCoefficients
from magicgp.model import e_step
from magicgp.predict import (
    ClassPrior,
    MagicModel,
    PredictionResult,
    class_marginal,
    impute_new,
    map_classify,
    meta_combine,
    predict_prob,
    predict_sample,
)
from magicgp.series import SampleSeries
from magicgp.validation import grid_indices


def build_model(rng, with_coeffs=True):
    from dataclasses import replace

    grid, params, samples = random_small_instance(rng)
    basis_cfg = open_uniform_basis(4, grid[0], grid[-1])
    if with_coeffs:
        params = replace(
            params, coeffs=LogisticCoefficients(rng.normal(), rng.normal(size=4))
        )
    post0, post1 = e_step(samples, grid, params)
    labels = [s.label for s in samples]
    model = MagicModel(
        params=params,
        post0=post0,
        post1=post1,
        grid=grid,
        basis=basis_cfg,
        prior=ClassPrior.from_labels(labels),
    )
    return model, grid, params


def joint_moments(model, z):
    post = model.posterior(z)
    k_dev = oracles.rbf(
        model.params.theta.amplitude, model.params.theta.length_scale, model.grid
    )
    cov = post.cov + k_dev + model.params.sigma2 * np.eye(model.grid.size)
    return post.mean, cov


def random_new_sample(rng, grid, sid="new"):
    n = grid.size
    k = int(rng.integers(1, n + 1))
    keep = np.sort(rng.choice(n, size=k, replace=False))
    return SampleSeries(sid, grid[keep], rng.standard_normal(k))


class TestClassPrior:
    def test_from_labels(self):
        prior = ClassPrior.from_labels([0, 1, 1, 1])
        assert prior.p0 == pytest.approx(0.25)
        assert prior.p1 == pytest.approx(0.75)

    def test_log_of_zero_probability(self):
        prior = ClassPrior(1.0, 0.0)
        assert prior.log(1) == -np.inf
        assert prior.log(0) == 0.0

    def test_must_sum_to_one(self):
        with pytest.raises(InvalidParameterError):
            ClassPrior(0.7, 0.7)
        with pytest.raises(InvalidParameterError):
            ClassPrior(-0.1, 1.1)


class TestClassMarginalAgainstScipy:
    def test_many_random_instances(self, rng):
        for _ in range(30):
            model, grid, params = build_model(rng)
            new = random_new_sample(rng, grid)
            obs = grid_indices(new.times, grid)
            for z in (0, 1):
                mean, cov = joint_moments(model, z)
                ref = oracles.gaussian_logpdf(
                    new.values, mean[obs], cov[np.ix_(obs, obs)]
                )
                got = class_marginal(new, z, model)
                assert got == pytest.approx(ref, abs=1e-10)

    def test_empty_sample_warns_and_returns_zero(self, rng):
        model, grid, _ = build_model(rng)
        empty = SampleSeries("none", [], [])
        with pytest.warns(RuntimeWarning, match="no observations"):
            assert class_marginal(empty, 0, model) == 0.0

    def test_rejects_bad_class(self, rng):
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid)
        with pytest.raises(InvalidParameterError):
            class_marginal(new, 2, model)


class TestMapClassify:
    def test_scores_are_marginal_plus_log_prior(self, rng):
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid)
        assigned, scores = map_classify(new, model)
        for z in (0, 1):
            expect = class_marginal(new, z, model) + model.prior.log(z)
            assert scores[z] == pytest.approx(expect, abs=1e-12)
        assert assigned == (0 if scores[0] >= scores[1] else 1)

    def test_tie_goes_to_class_zero(self, rng):
        # symmetric construction: identical posteriors and a flat prior
        model, grid, params = build_model(rng)
        sym = MagicModel(
            params=params,
            post0=model.post0,
            post1=model.post0,
            grid=grid,
            basis=model.basis,
            prior=ClassPrior(0.5, 0.5),
        )
        new = random_new_sample(rng, grid)
        assigned, scores = map_classify(new, sym)
        assert scores[0] == scores[1]
        assert assigned == 0

    def test_degenerate_prior_forces_class(self, rng):
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid)
        assigned, scores = map_classify(new, model, ClassPrior(1.0, 0.0))
        assert assigned == 0 and scores[1] == -np.inf

    def test_prior_shift_moves_threshold(self, rng):
        # a strong enough prior flips any finite margin
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid)
        _, scores = map_classify(new, model, ClassPrior(0.5, 0.5))
        if scores[0] >= scores[1]:
            margin = scores[0] - scores[1]
            p1 = 1.0 - 1.0 / (2.0 + np.exp(margin + 1.0))
            assigned, _ = map_classify(new, model, ClassPrior(1.0 - p1, p1))
            assert assigned == 1


class TestImputeNewAgainstOracle:
    def test_many_random_instances(self, rng):
        for _ in range(30):
            model, grid, _ = build_model(rng)
            new = random_new_sample(rng, grid)
            obs = grid_indices(new.times, grid)
            for z in (0, 1):
                mean, cov = joint_moments(model, z)
                ref_curve, ref_var = oracles.condition_gaussian(
                    mean, cov, obs, new.values
                )
                curve, var = impute_new(new, z, model)
                np.testing.assert_allclose(curve, ref_curve, atol=1e-10)
                np.testing.assert_allclose(var, ref_var, atol=1e-10)

    def test_observed_points_pass_through_exactly(self, rng):
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid)
        obs = grid_indices(new.times, grid)
        curve, var = impute_new(new, 0, model)
        np.testing.assert_array_equal(curve[obs], new.values)
        np.testing.assert_array_equal(var[obs], 0.0)

    def test_empty_sample_returns_posterior_predictive_prior(self, rng):
        model, grid, _ = build_model(rng)
        empty = SampleSeries("none", [], [])
        curve, var = impute_new(empty, 1, model)
        mean, cov = joint_moments(model, 1)
        np.testing.assert_array_equal(curve, mean)
        np.testing.assert_allclose(var, np.diag(cov), atol=1e-12)


class TestPredictProbAndMeta:
    def test_predict_prob_is_logistic_of_covariate(self, rng):
        model, grid, _ = build_model(rng)
        f = rng.standard_normal(grid.size)
        x = functional_covariate(f, grid, model.basis)
        expect = float(expit(model.params.coeffs.stacked() @ x))
        assert predict_prob(model, f) == pytest.approx(expect, abs=1e-14)

    def test_meta_combine_is_arithmetic_mean(self):
        assert meta_combine([0.2, 0.4, 0.9]) == pytest.approx(0.5)
        assert meta_combine([0.7]) == 0.7

    def test_meta_combine_validates(self):
        with pytest.raises(InvalidParameterError):
            meta_combine([])
        with pytest.raises(InvalidParameterError):
            meta_combine([0.5, 1.2])
        with pytest.raises(InvalidParameterError):
            meta_combine([0.5, np.nan])


class TestPredictSample:
    def test_pipeline_consistency(self, rng):
        model, grid, _ = build_model(rng)
        new = random_new_sample(rng, grid, "abc")
        res = predict_sample(model, new)
        assert isinstance(res, PredictionResult)
        assert res.sample_id == "abc"
        assigned, scores = map_classify(new, model)
        assert res.assigned_class == assigned
        assert res.map_log_scores == scores
        curve, var = impute_new(new, assigned, model)
        np.testing.assert_array_equal(res.curve, curve)
        np.testing.assert_array_equal(res.variance, var)
        assert res.probability == pytest.approx(predict_prob(model, curve), abs=0)

    def test_result_container_validates(self, rng):
        with pytest.raises(InvalidParameterError):
            PredictionResult("x", 2, (0.0, 0.0), 0.5, np.zeros(3), np.zeros(3))
        with pytest.raises(InvalidParameterError):
            PredictionResult("x", 0, (0.0, 0.0), 1.5, np.zeros(3), np.zeros(3))
        with pytest.raises(InvalidParameterError):
            PredictionResult("x", 0, (0.0, 0.0), 0.5, np.zeros(3), -np.ones(3))

    def test_model_validates_posterior_size(self, rng):
        model, grid, params = build_model(rng)
        bigger = np.append(grid, grid[-1] + 1.0)
        with pytest.raises(InvalidParameterError):
            MagicModel(
                params=params,
                post0=model.post0,
                post1=model.post1,
                grid=bigger,
                basis=model.basis,
            )
