import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magicgp.errors import DataError, InvalidParameterError
from magicgp.series import SampleSeries
from magicgp.simulate import (
    SimConfig,
    apply_missingness,
    default_mean0,
    default_mean1,
    generate_dataset,
    kept_count,
    sample_gaussian,
    slow_mean0,
)


class TestConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert cfg.grid.size == 51
        assert cfg.grid[0] == 0.0 and cfg.grid[-1] == 50.0
        assert cfg.theta0.amplitude == 1.0 and cfg.theta0.length_scale == 50.0
        assert cfg.theta.amplitude == 10.0 and cfg.theta.length_scale == 100.0
        assert cfg.sigma == 0.01
        assert cfg.per_class == 75

    def test_mean_functions(self):
        t = np.arange(5.0)
        np.testing.assert_allclose(default_mean0(t), np.sin(0.5 * np.pi * t), atol=1e-15)
        np.testing.assert_allclose(default_mean1(t), -default_mean0(t), atol=0)
        assert slow_mean0(np.array([25.0]))[0] == pytest.approx(1.0)

    def test_presets(self):
        cfg = SimConfig.with_preset("zero")
        np.testing.assert_array_equal(cfg.class_mean_values(0), 0.0)
        np.testing.assert_array_equal(cfg.class_mean_values(1), 0.0)
        with pytest.raises(InvalidParameterError, match="preset"):
            SimConfig.with_preset("bogus")

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            SimConfig(sigma=0.0)
        with pytest.raises(InvalidParameterError):
            SimConfig(per_class=0)


class TestSampleGaussian:
    def test_moments_match(self, rng):
        mean = np.array([1.0, -2.0, 0.5])
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + 0.5 * np.eye(3)
        draws = sample_gaussian(rng, mean, cov, size=200_000)
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.02)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05)

    def test_handles_rank_deficient_covariance(self, rng):
        # long length scales give numerically singular grams
        u = rng.standard_normal(4)
        cov = np.outer(u, u)
        draws = sample_gaussian(rng, np.zeros(4), cov, size=5000)
        assert np.isfinite(draws).all()
        # every draw lies on the one-dimensional subspace spanned by u
        resid = draws - np.outer(draws @ u, u) / (u @ u)
        assert np.abs(resid).max() < 1e-6


class TestGenerateDataset:
    def test_shapes_labels_and_ids(self):
        cfg = SimConfig(per_class=5)
        samples, truth = generate_dataset(cfg)
        assert len(samples) == 10
        assert [s.label for s in samples] == [0] * 5 + [1] * 5
        assert [s.id for s in samples] == [f"sim-{i:03d}" for i in range(10)]
        assert all(s.n_obs == 51 for s in samples)
        assert len(truth.class_means) == 2
        assert set(truth.complete) == {s.id for s in samples}

    def test_deterministic_by_seed(self):
        cfg = SimConfig(per_class=3, seed=11)
        s1, t1 = generate_dataset(cfg)
        s2, t2 = generate_dataset(cfg)
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(t1.class_means[0], t2.class_means[0])

    def test_different_seeds_differ(self):
        s1, _ = generate_dataset(SimConfig(per_class=2, seed=1))
        s2, _ = generate_dataset(SimConfig(per_class=2, seed=2))
        assert not np.array_equal(s1[0].values, s2[0].values)

    def test_complete_matches_observed_values(self):
        samples, truth = generate_dataset(SimConfig(per_class=2))
        for s in samples:
            np.testing.assert_array_equal(truth.complete[s.id], s.values)

    def test_empirical_variance_structure(self):
        # conditional on the drawn class mean, Var(y) at one grid point is
        # theta_amp^2 + sigma^2; modest amplitudes keep the check tight
        from magicgp.kernels import KernelParams

        cfg = SimConfig(
            grid=np.arange(21.0),
            theta0=KernelParams(1.0, 5.0),
            theta1=KernelParams(1.0, 5.0),
            theta=KernelParams(2.0, 3.0),
            sigma=0.5,
            per_class=30,
        )
        rng = np.random.default_rng(99)
        point = []
        for _ in range(150):
            samples, truth = generate_dataset(cfg, rng)
            mu = truth.class_means[0]
            point.extend((s.values[7] - mu[7]) for s in samples if s.label == 0)
        var = np.var(point)
        expect = 2.0**2 + 0.5**2
        assert var == pytest.approx(expect, rel=0.15)

    def test_class_mean_drawn_around_configured_function(self):
        rng = np.random.default_rng(5)
        devs = []
        cfg = SimConfig(per_class=1)
        for _ in range(200):
            _, truth = generate_dataset(cfg, rng)
            devs.append(truth.class_means[0] - default_mean0(cfg.grid))
        devs = np.asarray(devs)
        # centered on the configured mean with unit amplitude
        assert np.abs(devs.mean(axis=0)).max() < 0.3
        assert np.std(devs[:, 25]) == pytest.approx(1.0, rel=0.25)


class TestKeptCount:
    def test_reference_values(self):
        assert kept_count(51, 0.8) == 10
        assert kept_count(51, 0.5) == 26  # 25.5 rounds up
        assert kept_count(10, 0.95) == 1
        assert kept_count(10, 0.99) == 0

    @given(
        st.integers(min_value=1, max_value=500),
        st.floats(min_value=0.0, max_value=0.999),
    )
    def test_matches_round_half_up(self, n, alpha):
        x = (1.0 - alpha) * n
        assert kept_count(n, alpha) == int(np.floor(x + 0.5))


class TestApplyMissingness:
    def _full(self, n=51):
        grid = np.arange(float(n))
        return SampleSeries("s", grid, np.sin(grid), label=0)

    def test_keeps_expected_count(self):
        out = apply_missingness(self._full(), 0.8, np.random.default_rng(0))
        assert out.n_obs == 10
        assert out.label == 0

    def test_times_strictly_increasing_one_per_bin(self):
        s = self._full(51)
        out = apply_missingness(s, 0.8, np.random.default_rng(3))
        idx = out.times.astype(int)
        assert np.all(np.diff(idx) > 0)
        edges = np.floor(np.arange(11) * 5.1).astype(int)
        for j in range(10):
            assert edges[j] <= idx[j] < edges[j + 1]

    def test_values_track_times(self):
        s = self._full(30)
        out = apply_missingness(s, 0.6, np.random.default_rng(1))
        np.testing.assert_array_equal(out.values, np.sin(out.times))

    def test_alpha_zero_keeps_everything(self):
        s = self._full(20)
        out = apply_missingness(s, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out.times, s.times)
        np.testing.assert_array_equal(out.values, s.values)

    def test_deterministic_given_seed(self):
        s = self._full()
        a = apply_missingness(s, 0.7, 42)
        b = apply_missingness(s, 0.7, 42)
        np.testing.assert_array_equal(a.times, b.times)

    def test_zero_kept_raises(self):
        s = self._full(10)
        with pytest.raises(DataError, match="zero"):
            apply_missingness(s, 0.99, np.random.default_rng(0))

    def test_alpha_domain(self):
        s = self._full(10)
        for bad in (-0.1, 1.0, np.nan):
            with pytest.raises(InvalidParameterError):
                apply_missingness(s, bad, np.random.default_rng(0))

    @settings(deadline=None, max_examples=60)
    @given(
        st.integers(min_value=2, max_value=120),
        st.floats(min_value=0.0, max_value=0.95),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_bin_structure_property(self, n, alpha, seed):
        if kept_count(n, alpha) < 1:
            return
        grid = np.arange(float(n))
        s = SampleSeries("p", grid, grid * 0.5, label=1)
        out = apply_missingness(s, alpha, np.random.default_rng(seed))
        kept = kept_count(n, alpha)
        assert out.n_obs == kept
        idx = out.times.astype(int)
        assert np.all(np.diff(idx) > 0)
        edges = np.floor(np.arange(kept + 1) * (n / kept)).astype(int)
        assert np.all(idx >= edges[:-1]) and np.all(idx < edges[1:])
