import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fibershrink.catalog import EXAMPLES, make_example
from fibershrink.errors import SingularMetricError
from fibershrink.submersion import ProjectorState
from fibershrink.variation import (
    VariedMetric,
    VariedState,
    g_eps_at,
    gamma_eps_direct_at,
    gamma_eps_formula,
    hessian_pi_at,
    shrink_factor,
    variation_suite,
)

import oracles

EPS_GRID = (-0.5, 0.25, 0.5, 0.9, 0.99)


def apply(a, v):
    return np.einsum("pij,pj->pi", a, v)


def varied(name, eps, count=20, seed=0):
    spec = make_example(name)
    return VariedState(ProjectorState(spec, spec.sample_points(np.random.default_rng(seed), count)), eps)


class TestVariedMetric:
    def test_zero_eps_is_bitwise_original(self):
        spec = make_example("hopf")
        pts = spec.sample_points(np.random.default_rng(0), 10)
        g = ProjectorState(spec, pts).g_jet
        ge = g_eps_at(VariedMetric(spec, 0.0), pts)
        for a, b in zip(g.coeffs, ge.coeffs):
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("eps,factor", [(0.5, 0.25), (0.9, 0.01), (-1.0, 4.0)])
    def test_vertical_frame_lengths(self, eps, factor):
        for name in ("hopf", "hopf-x-s1", "s2xs2-warped", "lorentz-warped"):
            ve = varied(name, eps)
            s = ve.base
            cols = s.frame.columns
            gram = np.einsum("pai,pab,pbj->pij", cols, ve.g, cols)
            diag = np.einsum("pii->pi", gram)
            expected = s.frame.signs.copy()
            expected[:, : s.k] *= factor
            assert_allclose(diag, expected, atol=1e-12)

    def test_splitting_stays_orthogonal(self):
        ve = varied("hopf", 0.7, 50)
        rng = np.random.default_rng(1)
        x, y = ve.base.random_vectors(rng), ve.base.random_vectors(rng)
        assert np.max(np.abs(ve.inner(apply(ve.base.H, x), apply(ve.base.V, y)))) < 1e-10

    def test_rescaled_frame_is_orthonormal(self):
        ve = varied("s2xs2-warped", 0.9)
        f = ve.frame_columns
        gram = np.einsum("pai,pab,pbj->pij", f, ve.g, f)
        assert_allclose(gram, np.broadcast_to(np.eye(4), gram.shape), atol=1e-12)

    @pytest.mark.parametrize("eps", [1.0, 1.5])
    def test_metric_level_rejects_degenerate_eps(self, eps):
        spec = make_example("hopf")
        with pytest.raises(SingularMetricError):
            g_eps_at(VariedMetric(spec, eps), spec.sample_points(np.random.default_rng(0), 2))

    def test_shrink_factor(self):
        assert shrink_factor(0.0) == 0.0
        assert shrink_factor(1.0) == 1.0
        assert shrink_factor(-1.0) == -3.0


class TestDifferenceTensor:
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_product_vanishes(self, eps):
        spec = make_example("s2xs2-product")
        g = gamma_eps_direct_at(VariedMetric(spec, eps), spec.sample_points(np.random.default_rng(2), 20))
        # coordinate components near the poles amplify rounding by cot(theta) / (1 - eps)^2
        assert np.max(np.abs(g)) < 1e-10

    def test_zero_eps_vanishes(self):
        spec = make_example("hopf")
        assert not gamma_eps_direct_at(VariedMetric(spec, 0.0), spec.sample_points(np.random.default_rng(3), 5)).any()

    def test_hopf_direct_equals_formula(self):
        ve = varied("hopf", 0.5, 50)
        rng = np.random.default_rng(4)
        x, y = ve.base.random_vectors(rng), ve.base.random_vectors(rng)
        diff = ve.gamma_direct(x, y) - gamma_eps_formula(ve.base, 0.5, x, y)
        assert np.max(ve.base.vec_norm(diff)) < 1e-9

    @pytest.mark.parametrize("name", list(EXAMPLES))
    @pytest.mark.parametrize("eps", EPS_GRID)
    def test_direct_equals_formula_on_catalog(self, name, eps):
        ve = varied(name, eps, 50, seed=5)
        rng = np.random.default_rng(6)
        x, y = ve.base.random_vectors(rng), ve.base.random_vectors(rng)
        diff = ve.gamma_direct(x, y) - gamma_eps_formula(ve.base, eps, x, y)
        assert np.max(ve.base.vec_norm(diff)) < 1e-9

    def test_direct_against_finite_differences(self):
        spec = make_example("hopf")
        eps = 0.6
        p = np.array([1.1, 0.4, 0.7])

        def g_eps(q):
            s = ProjectorState(spec, q[None])
            a = np.eye(3) - eps * s.V[0]
            return a.T @ s.g[0] @ a

        class Sampled:
            dim = 3

            @staticmethod
            def values(q):
                return g_eps(np.asarray(q, dtype=float))[None]

        expected = oracles.fd_christoffels(Sampled, p) - oracles.fd_christoffels(spec.metric, p)
        got = gamma_eps_direct_at(VariedMetric(spec, eps), p[None])[0]
        assert_allclose(got, expected, atol=1e-7)

    def test_both_horizontal_arguments(self):
        ve = varied("hopf-x-s1", 0.5)
        rng = np.random.default_rng(7)
        h, k = ve.base.random_vectors(rng, "horizontal"), ve.base.random_vectors(rng, "horizontal")
        assert np.max(ve.base.vec_norm(gamma_eps_formula(ve.base, 0.5, h, k))) < 1e-13

    def test_vertical_second_argument(self):
        s = varied("hopf-x-s1", 0.3).base
        rng = np.random.default_rng(8)
        x, v = s.random_vectors(rng), s.random_vectors(rng, "vertical")
        assert_allclose(gamma_eps_formula(s, 0.3, x, v), shrink_factor(0.3) * apply(s.nabla_h(x), v), atol=1e-14)

    def test_horizontal_second_argument(self):
        s = varied("s2xs2-warped", 0.3).base
        rng = np.random.default_rng(9)
        x, h = s.random_vectors(rng), s.random_vectors(rng, "horizontal")
        expected = shrink_factor(0.3) * apply(s.nabla_h(h), apply(s.V, x))
        assert_allclose(gamma_eps_formula(s, 0.3, x, h), expected, atol=1e-14)

    def test_symmetric_and_horizontal(self):
        ve = varied("hopf-x-s1", 0.8, 30)
        d = ve.difference.c0
        assert np.max(np.abs(d - np.swapaxes(d, -1, -2))) < 1e-15
        assert np.max(np.abs(np.einsum("pij,pjkl->pikl", ve.base.V, d))) < 1e-10

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.9, 0.95), st.floats(-0.9, 0.95))
    def test_scales_with_shrink_factor(self, e1, e2):
        if min(abs(shrink_factor(e1)), abs(shrink_factor(e2))) < 1e-2:
            return
        spec = make_example("hopf")
        p = np.array([[0.5, 1.5, 0.8]])
        d1 = gamma_eps_direct_at(VariedMetric(spec, e1), p)
        d2 = gamma_eps_direct_at(VariedMetric(spec, e2), p)
        big = np.abs(d2) > 1e-3
        assert_allclose(d1[big] / d2[big], shrink_factor(e1) / shrink_factor(e2), rtol=1e-6)


class TestMapHessian:
    def test_product_horizontal_vanishes(self):
        s = varied("s2xs2-product", 0.5).base
        rng = np.random.default_rng(10)
        h, k = s.random_vectors(rng, "horizontal"), s.random_vectors(rng, "horizontal")
        assert np.max(np.abs(hessian_pi_at(s, h, k))) < 1e-13

    @pytest.mark.parametrize("name", ["hopf", "hopf-x-s1", "s2xs2-warped"])
    def test_full_shrink_pushes_difference_to_hessian(self, name):
        s = varied(name, 0.5, 30).base
        rng = np.random.default_rng(11)
        x, y = s.random_vectors(rng), s.random_vectors(rng)
        lhs = s.push(gamma_eps_formula(s, 1.0, x, y))
        assert np.max(s.base_vec_norm(lhs - hessian_pi_at(s, x, y))) < 1e-10

    def test_hopf_map_hessian_identity(self):
        ve = varied("hopf", 0.5, 50)
        rng = np.random.default_rng(12)
        x, y = ve.base.random_vectors(rng), ve.base.random_vectors(rng)
        res = ve.base.push(ve.gamma_direct(x, y)) - shrink_factor(0.5) * hessian_pi_at(ve.base, x, y)
        assert np.max(ve.base.base_vec_norm(res)) < 1e-9


class TestVariationSuite:
    def test_zero_eps_is_trivial(self):
        spec = make_example("hopf")
        rep = variation_suite(spec, spec.sample_points(np.random.default_rng(0), 20), 0.0)
        assert rep.max_residual < 1e-12

    def test_product_is_trivial(self):
        spec = make_example("s2xs2-product")
        rep = variation_suite(spec, spec.sample_points(np.random.default_rng(0), 20), 0.7)
        assert rep.max_residual < 1e-12

    @pytest.mark.parametrize("eps", [0.3, 0.7, 0.9])
    def test_hopf(self, eps):
        spec = make_example("hopf")
        rep = variation_suite(spec, spec.sample_points(np.random.default_rng(1), 50), eps, tol=1e-9)
        assert rep.passed, [(e.identity_name, e.max_residual) for e in rep.entries if not e.passed]

    def test_lists_identities(self):
        spec = make_example("hopf")
        rep = variation_suite(spec, spec.sample_points(np.random.default_rng(1), 5), 0.5)
        for name in (
            "varied_metric_in_frame",
            "difference_tensor_formula",
            "varied_metric_derivative",
            "map_hessian_projection",
            "varied_projector_derivative_on_horizontal",
            "varied_projector_derivative_on_vertical",
        ):
            assert name in rep.names
