import numpy as np
import pytest
from numpy.testing import assert_allclose

from fibershrink import forms
from fibershrink.catalog import Trivialization, make_example
from fibershrink.errors import FitError, QuadratureNodeError
from fibershrink.fibration import (
    THREADS_ENV,
    QuadratureRule,
    SweepResult,
    block_norms,
    epsilon_sweep,
    euler_coefficients,
    euler_integral,
    euler_pushforward,
    fiber_euler_characteristic,
    fiber_pushforward,
    fit_loglog,
    geometric_eps_grid,
    thread_count,
    total_integral,
)
from fibershrink.forms import ExteriorForm
from fibershrink.geometry import Chart


def fiber_rule(spec, order=16, periodic_order=None):
    return QuadratureRule.for_chart(spec.trivialization.fiber_chart, order, periodic_order)


def dpi(spec, pts):
    return spec.projection.jet(pts, order=1).grad().c0


def smooth(x, c):
    """A smooth periodic test function of the chart coordinates."""
    return 1.0 + 0.3 * np.cos(x @ c) + 0.2 * np.sin(2 * x[..., -1])


class TestQuadratureRule:
    def test_interval_rule_is_exact_on_polynomials(self):
        rule = QuadratureRule.for_chart(Chart((-1.0,), (2.0,), ("interval",)), 6)
        x = rule.nodes[:, 0]
        assert_allclose(rule.weights @ (x**5 - 2 * x**2), (2.0**6 - 1) / 6 - 2 * (8 + 1) / 3, rtol=1e-13)

    def test_periodic_rule_has_equal_weights(self):
        rule = QuadratureRule.for_chart(Chart((0.0,), (2 * np.pi,), ("periodic",)), 8)
        assert np.all(rule.weights == rule.weights[0])
        assert_allclose(rule.weights @ np.cos(3 * rule.nodes[:, 0]) ** 2, np.pi, rtol=1e-14)

    def test_polar_rule_absorbs_the_jacobian(self):
        rule = QuadratureRule.for_chart(Chart((0.0,), (np.pi,), ("polar",)), 8)
        th = rule.nodes[:, 0]
        assert_allclose(rule.weights @ (np.sin(th) * np.cos(th) ** 2), 2.0 / 3.0, rtol=1e-14)

    @pytest.mark.parametrize("name", ["s2xs2-warped", "hopf-x-s1", "flat-torus-bundle"])
    def test_weights_positive(self, name):
        spec = make_example(name)
        rule = QuadratureRule.for_chart(spec.chart, 6, 4)
        assert np.all(rule.weights > 0)
        assert len(rule) == np.prod(rule.orders)

    def test_point_chart(self):
        rule = QuadratureRule.for_chart(Chart((), (), ()))
        assert len(rule) == 1 and rule.nodes.shape == (1, 0)


class TestTotalIntegral:
    def test_round_sphere(self):
        assert abs(euler_integral(make_example("s2-round"), order=64) - 2.0) < 1e-6

    def test_doubling_order_is_converged(self):
        spec = make_example("s2-round")
        assert abs(euler_integral(spec, order=32) - euler_integral(spec, order=64)) < 1e-9

    def test_flat_torus(self):
        assert abs(euler_integral(make_example("flat-torus-bundle"), order=16)) < 1e-10

    @pytest.mark.parametrize("eps", [0.0, 0.5, 0.9])
    def test_product_of_spheres(self, eps):
        assert abs(euler_integral(make_example("s2xs2-product"), eps, 12, 4) - 4.0) < 1e-4

    def test_warped_spheres_keep_euler_number(self):
        assert abs(euler_integral(make_example("s2xs2-warped"), 0.5, 12, 8) - 4.0) < 1e-4

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError):
            euler_integral(make_example("hopf"))

    def test_non_top_degree_rejected(self):
        spec = make_example("s2-round")
        rule = QuadratureRule.for_chart(spec.chart, 4)
        with pytest.raises(ValueError):
            total_integral(euler_coefficients(spec, None), spec, rule, degree=1)
        with pytest.raises(ValueError):
            total_integral(lambda p: np.ones((len(p), 2)), spec, rule)

    def test_threads_give_identical_sums(self, monkeypatch):
        spec = make_example("s2-round")
        monkeypatch.setenv(THREADS_ENV, "1")
        one = euler_integral(spec, order=64)
        monkeypatch.setenv(THREADS_ENV, "3")
        assert thread_count() == 3
        assert euler_integral(spec, order=64) == one

    @pytest.mark.parametrize("value,expected", [("4", 4), ("0", 1), ("bogus", 1)])
    def test_thread_count_parsing(self, monkeypatch, value, expected):
        monkeypatch.setenv(THREADS_ENV, value)
        assert thread_count() == expected


class TestFiberPushforward:
    def test_normalised_fiber_area_integrates_to_one(self):
        spec = make_example("s2xs2-product")
        probes = spec.base_chart.sample(np.random.default_rng(0), 5)

        def area(pts):
            c = np.zeros((len(pts), 6))
            c[:, forms.basis(4, 2).index((0, 1))] = np.sin(pts[:, 0]) / (4 * np.pi)
            return ExteriorForm(4, 2, c)

        out = fiber_pushforward(area, spec.trivialization, probes, fiber_rule(spec))
        assert out.degree == 0
        assert_allclose(out.coeffs[:, 0], 1.0, atol=1e-12)

    def test_low_degree_gives_zero(self):
        spec = make_example("s2xs2-product")
        out = fiber_pushforward(lambda p: ExteriorForm(4, 1, np.ones((len(p), 4))), spec.trivialization, [[1.0, 1.0]], fiber_rule(spec, 4))
        assert not out.coeffs.any()

    @pytest.mark.parametrize("name", ["s2xs2-warped", "hopf", "hopf-x-s1"])
    def test_projection_formula(self, name):
        spec = make_example(name)
        triv = spec.trivialization
        n, b, k = spec.n, spec.b, spec.k
        rng = np.random.default_rng(1)
        c_beta, c_omega = rng.normal(size=b), rng.normal(size=n)
        beta_deg, omega_deg = 1, k + b - 1
        wb = rng.normal(size=len(forms.basis(b, beta_deg)))
        wo = rng.normal(size=len(forms.basis(n, omega_deg)))

        def beta(y):
            return ExteriorForm(b, beta_deg, smooth(y, c_beta)[:, None] * wb)

        def omega(x):
            return ExteriorForm(n, omega_deg, smooth(x, c_omega)[:, None] * wo)

        def combined(x):
            pulled = forms.pullback(beta(spec.projection.values(x)), dpi(spec, x))
            return pulled ^ omega(x)

        probes = triv.base_chart.sample(rng, 6)
        rule = fiber_rule(spec, 12)
        lhs = fiber_pushforward(combined, triv, probes, rule)
        rhs = beta(probes) ^ fiber_pushforward(omega, triv, probes, rule)
        assert lhs.degree == b
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-8
        assert np.max(np.abs(rhs.coeffs)) > 1e-2

    def test_linearity(self):
        spec = make_example("hopf-x-s1")
        rng = np.random.default_rng(2)
        c1, c2 = rng.normal(size=4), rng.normal(size=4)
        w1, w2 = rng.normal(size=4), rng.normal(size=4)

        def f1(x):
            return ExteriorForm(4, 3, smooth(x, c1)[:, None] * w1)

        def f2(x):
            return ExteriorForm(4, 3, smooth(x, c2)[:, None] * w2)

        probes = spec.base_chart.sample(rng, 4)
        rule = fiber_rule(spec, 8)
        push = lambda f: fiber_pushforward(f, spec.trivialization, probes, rule)  # noqa: E731
        combo = push(lambda x: f1(x) * 2.0 - f2(x) * 0.5)
        assert np.max(np.abs(combo.coeffs - (2.0 * push(f1).coeffs - 0.5 * push(f2).coeffs))) < 1e-8

    def test_product_euler_pushforward(self):
        spec = make_example("s2xs2-product")
        probes = spec.base_chart.sample(np.random.default_rng(3), 6)
        base = forms.base_euler_form_at(spec, probes)
        for eps in (0.0, 0.6):
            pf = euler_pushforward(spec, probes, eps, 16, 4)
            assert_allclose(pf.coeffs, 2.0 * base.coeffs, atol=1e-12)

    def test_degenerate_trivialization(self):
        line = Chart((0.0,), (1.0,), ("interval",))
        triv = Trivialization(line, line, lambda y, f: [0.0 * f[0] + 0.5, y[0]])
        with pytest.raises(QuadratureNodeError):
            fiber_pushforward(lambda x: ExteriorForm(2, 2, np.ones((len(x), 1))), triv, [[0.5]], QuadratureRule.for_chart(line, 4))

    @pytest.mark.parametrize("name", ["s2xs2-warped", "hopf-x-s1", "flat-torus-bundle", "s2-round"])
    def test_fiber_euler_characteristic_matches_declared(self, name):
        spec = make_example(name)
        assert abs(fiber_euler_characteristic(spec, 24) - spec.fiber_euler_characteristic) < 1e-8


class TestSlopeFits:
    def test_exact_power_law(self):
        x = np.geomspace(0.5, 0.01, 6)
        fit = fit_loglog(x, 3.0 * x**2)
        assert_allclose(fit.slope, 2.0, rtol=1e-12)
        assert_allclose(fit.intercept, np.log(3.0), rtol=1e-12)
        assert fit.ci95 < 1e-10

    def test_flat_values(self):
        fit = fit_loglog([0.5, 0.1, 0.01], [1e-13, 0.0, 2e-14])
        assert fit.flat and fit.slope is None

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_loglog([0.5, 0.1], [1.0, 0.1])

    def test_non_positive_values(self):
        with pytest.raises(FitError):
            fit_loglog([0.5, 0.1, 0.01], [1.0, -0.1, 0.01])

    def test_interval_covers_noisy_slope(self):
        rng = np.random.default_rng(4)
        x = np.geomspace(0.5, 0.01, 8)
        fit = fit_loglog(x, x * np.exp(0.05 * rng.normal(size=8)))
        assert abs(fit.slope - 1.0) < fit.ci95


class TestEpsGrid:
    def test_geometric_spacing(self):
        grid = geometric_eps_grid(0.5, 0.99, 8)
        assert grid[0] == 0.5 and abs(grid[-1] - 0.99) < 1e-15
        ratios = (1 - grid[1:]) / (1 - grid[:-1])
        assert_allclose(ratios, ratios[0], rtol=1e-12)

    @pytest.mark.parametrize("args", [(0.5, 0.99, 1), (0.9, 0.5, 4), (0.5, 1.0, 4)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            geometric_eps_grid(*args)


class TestSweep:
    def test_product_has_no_eps_dependence(self):
        spec = make_example("s2xs2-product")
        res = epsilon_sweep(spec, [0.0, 0.5, 0.9, 0.99], n_points=10, n_probes=3, order=8, periodic_order=4, integrals=False)
        assert max(res.offdiag_norm) < 1e-10
        assert max(res.diag_corr_norm) < 1e-10
        assert max(res.pushforward_err) < 1e-10
        assert all(f.flat for f in res.fits.values())

    def test_hopf_x_s1_block_orders(self):
        spec = make_example("hopf-x-s1")
        res = epsilon_sweep(spec, geometric_eps_grid(0.5, 0.99, 5), n_points=10, n_probes=3, order=6, periodic_order=4, integrals=False)
        assert res.fits["offdiag_norm"].slope >= 0.9
        assert res.fits["diag_corr_norm"].slope >= 1.8
        assert res.monotone_decreasing("offdiag_norm")

    def test_block_norms_vanish_at_the_limit_for_product(self):
        spec = make_example("s2xs2-product")
        off, diag = block_norms(spec, spec.sample_points(np.random.default_rng(5), 5), 0.3)
        assert off == 0.0 and diag < 1e-12

    def test_csv_and_json(self):
        res = SweepResult("x", [0.5, 0.9], [1.0, 0.1], [1.0, 0.01], [None, None], [4.0, None])
        lines = res.to_csv().splitlines()
        assert lines[0] == "eps,offdiag_norm,diag_corr_norm,pushforward_err,total_euler_integral"
        assert lines[1] == "0.5,1.0,1.0,,4.0"
        doc = res.to_dict()
        assert doc["columns"][0] == "eps"
        assert doc["rows"][1] == [0.9, 0.1, 0.01, None, None]
        assert not res.monotone_decreasing("pushforward_err")

    def test_grid_validation(self):
        spec = make_example("s2xs2-product")
        with pytest.raises(FitError):
            epsilon_sweep(spec, [0.5, 0.9])
        with pytest.raises(ValueError):
            epsilon_sweep(spec, [0.5, 0.4, 0.9])
        with pytest.raises(ValueError):
            epsilon_sweep(spec, [0.5, 0.9, 1.0])

    def test_seeded_sweeps_are_identical(self):
        spec = make_example("hopf")
        a = epsilon_sweep(spec, [0.5, 0.7, 0.9], n_points=5, seed=3)
        b = epsilon_sweep(spec, [0.5, 0.7, 0.9], n_points=5, seed=3)
        assert a.to_csv() == b.to_csv()


def test_trivialization_jacobian_against_difference_quotient():
    triv = make_example("hopf").trivialization
    y, f = np.array([[0.3, 1.0]]), np.array([[0.7]])
    jac = triv.jacobian(y, f)[0, 0]
    h = 1e-6
    fd = np.stack(
        [
            (triv.points(y + h * np.eye(2)[i], f) - triv.points(y - h * np.eye(2)[i], f))[0, 0] / (2 * h)
            for i in range(2)
        ]
        + [(triv.points(y, f + h) - triv.points(y, f - h))[0, 0] / (2 * h)],
        axis=-1,
    )
    assert_allclose(jac, fd, atol=1e-8)
