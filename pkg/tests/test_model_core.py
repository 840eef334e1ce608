import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from magicgp.errors import DataError, InvalidParameterError
from magicgp.model import (
    TaylorMoments,
    _taylor_term,
    build_roughness,
    label_likelihood,
    taylor_label_term,
)


class TestBuildRoughness:
    def test_stencil_structure(self):
        pen = build_roughness(np.arange(5.0), 2.0)
        assert pen.dmat.shape == (3, 5)
        np.testing.assert_array_equal(pen.dmat[0], [1.0, -2.0, 1.0, 0.0, 0.0])
        np.testing.assert_array_equal(pen.dmat[2], [0.0, 0.0, 1.0, -2.0, 1.0])
        np.testing.assert_allclose(pen.rmat, 2.0 * pen.dmat.T @ pen.dmat, atol=0)
        assert pen.weight == 2.0

    def test_affine_sequences_unpenalized(self, rng):
        pen = build_roughness(np.arange(8.0), 1.0)
        a, b = rng.standard_normal(2)
        line = a + b * np.arange(8.0)
        assert abs(line @ pen.rmat @ line) < 1e-12

    def test_curvature_penalized(self):
        pen = build_roughness(np.arange(6.0), 1.0)
        quad = np.arange(6.0) ** 2
        assert quad @ pen.rmat @ quad > 1.0

    def test_psd(self, rng):
        pen = build_roughness(np.sort(rng.uniform(0, 10, 7)), 3.0)
        assert np.linalg.eigvalsh(pen.rmat).min() >= -1e-12

    def test_weight_scaling(self):
        grid = np.arange(5.0)
        r1 = build_roughness(grid, 1.0).rmat
        r4 = build_roughness(grid, 4.0).rmat
        np.testing.assert_allclose(r4, 4.0 * r1, atol=0)

    def test_small_grid_rejected(self):
        with pytest.raises(DataError):
            build_roughness([0.0, 1.0], 1.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidParameterError):
            build_roughness(np.arange(4.0), -0.5)


class TestTaylorTerm:
    def _naive(self, u, v):
        eu = np.exp(u)
        denom = 1.0 + eu + eu * v / 2.0
        return np.log1p(eu + eu * v / 2.0) - eu**2 * v / (2.0 * denom**2)

    def test_matches_naive_formula_in_safe_range(self, rng):
        u = rng.uniform(-15, 15, 60)
        v = rng.uniform(0, 5, 60)
        np.testing.assert_allclose(_taylor_term(u, v), self._naive(u, v), rtol=1e-11)

    def test_zero_variance_reduces_to_softplus(self, rng):
        u = rng.uniform(-30, 30, 20)
        np.testing.assert_allclose(_taylor_term(u, 0.0), np.logaddexp(0.0, u), rtol=1e-14)

    def test_extreme_arguments_finite(self):
        u = np.array([-800.0, -50.0, 0.0, 50.0, 800.0])
        out = _taylor_term(u, 0.3)
        assert np.isfinite(out).all()

    def test_large_positive_asymptote(self):
        # for u -> +inf: log(e^u (1 + v/2)) - (v/2) / (1 + v/2)^2
        v = 0.4
        expect = 800.0 + np.log1p(v / 2) - (v / 2) / (1 + v / 2) ** 2
        assert float(_taylor_term(800.0, v)) == pytest.approx(expect, abs=1e-10)

    def test_large_negative_vanishes(self):
        assert float(_taylor_term(-800.0, 0.4)) == pytest.approx(0.0, abs=1e-12)

    def test_approximates_gaussian_expectation_for_small_variance(self):
        # second-order accuracy: error against the exact smoothed softplus
        # stays within the documented envelope 0.5 * v^(3/2) + MC noise
        for u in (-1.0, 0.0, 0.7, 2.0):
            for v in (0.01, 0.05):
                mc, se = oracles.mc_softplus_expectation(u, v, 400_000, seed=42)
                err = abs(float(_taylor_term(u, v)) - mc)
                assert err <= 0.5 * v**1.5 + 4.0 * se

    @settings(deadline=None, max_examples=60)
    @given(
        st.floats(min_value=-30, max_value=30),
        st.floats(min_value=0.0, max_value=10.0),
    )
    def test_never_below_zero_property(self, u, v):
        # E[log(1+e^X)] >= 0 and the quadratic correction keeps the sign
        assert float(_taylor_term(u, v)) >= -1e-12


class TestMomentContainers:
    def test_taylor_moments_validate(self):
        m = TaylorMoments(0.5, 0.25)
        assert m.u == 0.5 and m.v == 0.25
        with pytest.raises(InvalidParameterError):
            TaylorMoments(0.0, -0.1)
        with pytest.raises(InvalidParameterError):
            TaylorMoments(np.nan, 0.1)

    def test_taylor_label_term_wraps_vectorized_form(self):
        m = TaylorMoments(0.8, 0.3)
        assert taylor_label_term(m) == float(_taylor_term(0.8, 0.3))

    def test_label_likelihood(self):
        m = TaylorMoments(1.2, 0.5)
        t = taylor_label_term(m)
        assert label_likelihood(m, 1) == pytest.approx(1.2 - t)
        assert label_likelihood(m, 0) == pytest.approx(-t)
        with pytest.raises(InvalidParameterError):
            label_likelihood(m, 2)
