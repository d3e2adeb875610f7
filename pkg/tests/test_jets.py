import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fibershrink import jets
from fibershrink.errors import JetDomainError, JetError, OrderError, SingularPointError
from fibershrink.jets import Jet3, extract_partial, jet_compose, lift_coordinate, lift_point


def fd_derivatives(f, x, h=1e-4):
    """Central differences of a scalar function of a vector: value, grad, hessian."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    e = np.eye(n) * h
    grad = np.array([(f(x + e[i]) - f(x - e[i])) / (2 * h) for i in range(n)])
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            hess[i, j] = (f(x + e[i] + e[j]) - f(x + e[i] - e[j]) - f(x - e[i] + e[j]) + f(x - e[i] - e[j])) / (4 * h * h)
    return f(x), grad, hess


def fd_third(f, x, h=1e-3):
    n = len(x)
    e = np.eye(n) * h
    out = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                s = 0.0
                for a in (1, -1):
                    for b in (1, -1):
                        for c in (1, -1):
                            s += a * b * c * f(x + a * e[i] + b * e[j] + c * e[k])
                out[i, j, k] = s / (8 * h**3)
    return out


class TestLift:
    def test_coordinate_jet_in_two_variables(self):
        j = lift_coordinate(0, 2.0, 2)
        assert j.c0 == 2.0
        assert_allclose(j.c1, [1.0, 0.0])
        assert_allclose(j.c2, np.zeros((2, 2)))
        assert_allclose(j.c3, np.zeros((2, 2, 2)))

    def test_coordinate_jet_in_three_variables(self):
        j = lift_coordinate(1, -1.0, 3)
        assert j.c0 == -1.0
        assert_allclose(j.c1, [0.0, 1.0, 0.0])

    def test_square(self):
        x = lift_coordinate(0, 3.0, 1)
        sq = x * x
        assert sq.c0 == 9.0
        assert_allclose(sq.c1, [6.0])
        assert_allclose(sq.c2, [[2.0]])
        assert_allclose(sq.c3, [[[0.0]]])

    def test_bad_index(self):
        with pytest.raises(JetError):
            lift_coordinate(3, 0.0, 2)

    def test_lift_point_is_batched(self):
        pts = np.arange(12.0).reshape(4, 3)
        xs = lift_point(pts)
        assert len(xs) == 3
        assert xs[2].shape == (4,)
        assert_allclose(xs[2].c1[2], np.ones(4))

    def test_order_limit(self):
        with pytest.raises(OrderError):
            Jet3([np.zeros(())] * 5, 1)


class TestCompose:
    def test_sin_maclaurin(self):
        s = jet_compose("sin", [lift_coordinate(0, 0.0, 1)])
        assert_allclose([s.c0, s.c1[0], s.c2[0, 0], s.c3[0, 0, 0]], [0.0, 1.0, 0.0, -1.0], atol=1e-15)

    def test_mul_mixed_partial(self):
        x, y = lift_point([1.0, 2.0])
        p = jet_compose("mul", [x, y])
        assert p.c0 == 2.0
        assert_allclose(p.c1, [2.0, 1.0])
        assert p.c2[0, 1] == 1.0

    def test_exp_against_finite_differences(self):
        x = 0.7
        e = jet_compose("exp", [lift_coordinate(0, x, 1)])
        h = 1e-4
        fd1 = (np.exp(x + h) - np.exp(x - h)) / (2 * h)
        fd2 = (np.exp(x + h) - 2 * np.exp(x) + np.exp(x - h)) / h**2
        fd3 = (np.exp(x + 2 * h) - 2 * np.exp(x + h) + 2 * np.exp(x - h) - np.exp(x - 2 * h)) / (2 * h**3)
        assert_allclose(e.c1[0], fd1, rtol=1e-6)
        assert_allclose(e.c2[0, 0], fd2, rtol=1e-6)
        # the third difference loses more digits to cancellation
        assert_allclose(e.c3[0, 0, 0], fd3, rtol=1e-4)

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_binary_ops_by_name(self, op):
        x, y = lift_point([1.5, -0.5])
        ref = {"add": x + y, "sub": x - y, "mul": x * y, "div": x / y}[op]
        out = jet_compose(op, [x, y])
        for a, b in zip(out.coeffs, ref.coeffs):
            assert_allclose(a, b)

    def test_pow_int(self):
        x = lift_coordinate(0, 1.3, 1)
        p = jet_compose("pow-int", [x], power_exponent=3)
        assert_allclose([p.c0, p.c1[0], p.c2[0, 0], p.c3[0, 0, 0]], [1.3**3, 3 * 1.3**2, 6 * 1.3, 6.0])

    def test_negative_power_at_zero(self):
        with pytest.raises(SingularPointError):
            jets.power(lift_coordinate(0, 0.0, 1), -1)

    def test_sqrt_domain(self):
        with pytest.raises(JetDomainError):
            jets.sqrt(lift_coordinate(0, -1.0, 1))

    def test_unknown_op(self):
        with pytest.raises(JetError):
            jet_compose("tan", [lift_coordinate(0, 0.0, 1)])

    def test_composite_against_finite_differences(self):
        rng = np.random.default_rng(7)

        def f_np(v):
            x, y, z = v
            return np.sin(x * y) * np.exp(z) / np.sqrt(2.0 + np.cos(x + z))

        def f_jet(xs):
            x, y, z = xs
            return jets.sin(x * y) * jets.exp(z) / jets.sqrt(2.0 + jets.cos(x + z))

        for _ in range(10):
            p = rng.uniform(-1, 1, 3)
            j = f_jet(lift_point(p))
            v, g, hss = fd_derivatives(f_np, p)
            assert_allclose(j.c0, v, rtol=1e-14)
            assert_allclose(j.c1, g, atol=1e-5)
            assert_allclose(j.c2, hss, atol=1e-5)
            assert_allclose(j.c3, fd_third(f_np, p), atol=1e-5)

    def test_arccos_against_finite_differences(self):
        p = np.array([0.3])
        j = jets.arccos(lift_coordinate(0, 0.3, 1))
        v, g, hss = fd_derivatives(lambda v: np.arccos(v[0]), p)
        assert_allclose(j.c1, g, atol=1e-7)
        assert_allclose(j.c2, hss, atol=1e-5)


class TestExtractPartial:
    def test_third_partial_of_x2y(self):
        x, y = lift_point([1.0, 1.0])
        assert extract_partial(x * x * y, (0, 0, 1)) == 2.0

    def test_constant_has_zero_partials(self):
        c = Jet3.constant(5.0, 1)
        assert extract_partial(c, (0,)) == 0.0

    def test_random_cubic_matches_hand_derivatives(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=6)
        px = rng.normal(size=2)

        def cubic(x, y):
            return a[0] + a[1] * x + a[2] * x * y + a[3] * y**2 + a[4] * x**3 + a[5] * x * y**2

        x, y = lift_point(px)
        j = cubic(x, y)
        X, Y = px
        assert_allclose(extract_partial(j, ()), cubic(X, Y))
        assert_allclose(extract_partial(j, (0,)), a[1] + a[2] * Y + 3 * a[4] * X**2 + a[5] * Y**2)
        assert_allclose(extract_partial(j, (1,)), a[2] * X + 2 * a[3] * Y + 2 * a[5] * X * Y)
        assert_allclose(extract_partial(j, (0, 1)), a[2] + 2 * a[5] * Y)
        assert_allclose(extract_partial(j, (1, 1)), 2 * a[3] + 2 * a[5] * X)
        assert_allclose(extract_partial(j, (0, 0, 0)), 6 * a[4])
        assert_allclose(extract_partial(j, (0, 1, 1)), 2 * a[5])
        assert_allclose(extract_partial(j, (1, 0, 1)), 2 * a[5])
        assert_allclose(extract_partial(j, (1, 1, 1)), 0.0, atol=1e-14)

    def test_too_many_indices(self):
        with pytest.raises(OrderError):
            extract_partial(lift_coordinate(0, 1.0, 1), (0, 0, 0, 0))

    def test_order_exceeds_jet(self):
        with pytest.raises(OrderError):
            extract_partial(lift_coordinate(0, 1.0, 1, order=1), (0, 0))


class TestTensorOps:
    def test_inverse_matches_finite_differences(self):
        p = np.array([0.4, -0.2])

        def mat(x, y):
            return [[2.0 + x * x, x * y], [x * y, 1.0 + jets_cos_or_np(y)]]

        def jets_cos_or_np(y):
            return jets.cos(y) if isinstance(y, Jet3) else np.cos(y)

        x, y = lift_point(p)
        inv = jets.inv(jets.matrix(mat(x, y)))
        for r in range(2):
            for c in range(2):
                f = lambda v: np.linalg.inv(np.array(mat(*v)))[r, c]  # noqa: E731
                _, g, hss = fd_derivatives(f, p)
                assert_allclose(inv.c1[:, r, c], g, atol=1e-7)
                assert_allclose(inv.c2[:, :, r, c], hss, atol=1e-5)
                assert_allclose(inv.c3[:, :, :, r, c], fd_third(f, p), atol=1e-5)

    def test_compose_is_chain_rule(self):
        p = np.array([0.3, 0.8])
        x, y = lift_point(p)
        inner = jets.vector([x * y, jets.sin(x) + y])
        u0 = inner.c0
        u, v = lift_point(u0)
        outer = jets.exp(u) * v * v
        direct = jets.exp(x * y) * (jets.sin(x) + y) ** 2
        got = jets.compose(outer, inner)
        for a, b in zip(got.coeffs, direct.coeffs):
            assert_allclose(a, b, atol=1e-13)

    def test_einsum_leibniz(self):
        x, y = lift_point([1.2, 0.4])
        a = jets.vector([x, y * y])
        b = jets.vector([jets.sin(y), x * y])
        dot = jets.einsum("i,i->", a, b)
        ref = x * jets.sin(y) + y * y * x * y
        for c1, c2 in zip(dot.coeffs, ref.coeffs):
            assert_allclose(c1, c2, atol=1e-14)

    def test_grad_appends_axis(self):
        x, y = lift_point([1.0, 2.0])
        g = (x * x * y).grad()
        assert g.shape == (2,)
        assert g.order == 2
        assert_allclose(g.c0, [4.0, 1.0])
        assert_allclose(g.c1, [[4.0, 2.0], [2.0, 0.0]])


finite = st.floats(-2, 2, allow_nan=False)


@st.composite
def jet_pairs(draw):
    p = np.array([draw(finite), draw(finite)])
    x, y = lift_point(p)
    a = x * y + draw(finite) * x
    b = jets.sin(y) + draw(finite) * x * x
    return a, b


class TestJetProperties:
    @settings(max_examples=50, deadline=None)
    @given(jet_pairs())
    def test_mul_commutes(self, pair):
        a, b = pair
        for c1, c2 in zip((a * b).coeffs, (b * a).coeffs):
            assert_allclose(c1, c2, rtol=0, atol=0)

    @settings(max_examples=50, deadline=None)
    @given(jet_pairs())
    def test_leibniz_first_order(self, pair):
        a, b = pair
        prod = a * b
        for i in range(2):
            assert extract_partial(prod, (i,)) == pytest.approx(a.c1[i] * b.c0 + a.c0 * b.c1[i], rel=1e-15, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(jet_pairs())
    def test_higher_coefficients_symmetric(self, pair):
        a, b = pair
        j = a * b / (2.5 + jets.cos(a))
        assert_allclose(j.c2, j.c2.T, atol=1e-14)
        for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
            assert_allclose(j.c3, np.transpose(j.c3, perm), atol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=10, max_size=10), finite, finite)
    def test_cubic_polynomials_are_exact(self, coef, px, py):
        x, y = lift_point([px, py])
        mono = [1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]
        j = sum((c * m for c, m in zip(coef, mono)), Jet3.constant(0.0, 2))
        c = coef
        assert extract_partial(j, (0, 0, 0)) == pytest.approx(6 * c[6], abs=1e-12)
        assert extract_partial(j, (0, 0, 1)) == pytest.approx(2 * c[7], abs=1e-12)
        assert extract_partial(j, (0, 1, 1)) == pytest.approx(2 * c[8], abs=1e-12)
        assert extract_partial(j, (1, 1, 1)) == pytest.approx(6 * c[9], abs=1e-12)
