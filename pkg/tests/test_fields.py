import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusq.fields import (
    DerivativeOrderError,
    DimensionMismatchError,
    PhasePoint,
    PoissonTensor,
    ScalarField,
    derivative_tensor,
    evaluate,
    numeric_field,
    partial,
    polynomial_field,
)
from torusq.poly import Poly


def oscillator_action(j: int, dim_n: int) -> Poly:
    x = Poly.var(j, 2 * dim_n)
    p = Poly.var(dim_n + j, 2 * dim_n)
    return (x * x + p * p) * 0.5


class TestPhasePoint:
    def test_dimension(self):
        z = PhasePoint(np.array([1.0, 2.0, 3.0, 4.0]))
        assert z.dim_n == 2

    def test_odd_length_rejected(self):
        with pytest.raises(DimensionMismatchError):
            PhasePoint(np.array([1.0, 2.0, 3.0]))

    def test_immutable(self):
        z = PhasePoint(np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            z.coords[0] = 2.0


class TestPoissonTensor:
    def test_antisymmetric(self):
        j = PoissonTensor(3).matrix()
        assert np.array_equal(j, -j.T)

    def test_inverse(self):
        t = PoissonTensor(3)
        assert np.allclose(t.matrix() @ t.inverse(), np.eye(6))

    def test_square_is_minus_identity(self):
        j = PoissonTensor(2).matrix()
        assert np.allclose(j @ j, -np.eye(4))

    def test_lower_action_angle_tuple(self):
        # (phi, A) lowers to (-A, phi)
        t = PoissonTensor(2)
        d = np.array([1.0, 2.0, 3.0, 4.0])
        assert np.allclose(t.lower(d), [-3.0, -4.0, 1.0, 2.0])


class TestEvaluate:
    def test_oscillator_action_at_unit_point(self):
        f = polynomial_field(oscillator_action(0, 1), "I1")
        assert evaluate(f, PhasePoint(np.array([1.0, 1.0]))) == pytest.approx(1.0)

    def test_oscillator_action_at_fixed_point(self):
        f = polynomial_field(oscillator_action(0, 1), "I1")
        assert evaluate(f, PhasePoint(np.zeros(2))) == 0.0

    def test_balanced_hamiltonian_quadratic(self):
        # H = (w0/2)[p^2 + 2U], U = r^2/2, at x=(1,0), p=0 -> 0.5
        x, y, px, py = (Poly.var(i, 4) for i in range(4))
        h = ((px * px + py * py) + (x * x + y * y)) * 0.5
        f = polynomial_field(h, "H")
        assert evaluate(f, PhasePoint(np.array([1.0, 0, 0, 0]))) == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        f = polynomial_field(oscillator_action(0, 1), "I1")
        with pytest.raises(DimensionMismatchError):
            evaluate(f, PhasePoint(np.zeros(4)))


class TestPartial:
    def test_second_derivative_of_action(self):
        f = polynomial_field(oscillator_action(0, 1), "I1")
        z = PhasePoint(np.array([0.3, -0.7]))
        assert partial(f, z, [0, 0]) == pytest.approx(1.0)

    def test_third_derivative_vanishes(self):
        f = polynomial_field(oscillator_action(0, 1), "I1")
        z = PhasePoint(np.array([0.3, -0.7]))
        assert partial(f, z, [0, 0, 0]) == 0.0

    def test_hessian_at_origin_is_identity(self):
        # quadratic part of the central-force Hamiltonian: Hessian = w0 * I4
        w0 = 1.3
        x, y, px, py = (Poly.var(i, 4) for i in range(4))
        h = ((px * px + py * py) + (x * x + y * y)) * (0.5 * w0)
        f = polynomial_field(h, "H2")
        hess = derivative_tensor(f, np.zeros((1, 4)), 2)[0]
        assert np.allclose(hess, w0 * np.eye(4), atol=1e-12)

    def test_order_above_max_rejected(self):
        f = polynomial_field(oscillator_action(0, 1), "I1", max_order=2)
        with pytest.raises(DerivativeOrderError):
            partial(f, PhasePoint(np.zeros(2)), [0, 0, 0])

    def test_step_underflow(self):
        f = numeric_field("g", 1, lambda q: q[:, 0] ** 2, fd_steps={1: 0.0})
        with pytest.raises(DerivativeOrderError):
            partial(f, PhasePoint(np.zeros(2)), [0])


def _fd_version(poly: Poly, **kw) -> ScalarField:
    return numeric_field("fd", poly.nvars // 2, poly, **kw)


class TestFiniteDifferences:
    def test_fd_matches_analytic_on_polynomials(self, rng):
        # cubic in 4 variables
        terms = {}
        for _ in range(6):
            e = tuple(rng.integers(0, 2, size=4))
            terms[e] = rng.normal()
        terms[(1, 1, 1, 0)] = 0.7
        p = Poly(4, terms)
        exact = polynomial_field(p, "p")
        approx = _fd_version(p)
        pts = rng.normal(size=(5, 4))
        # roundoff amplification grows as h^-order; tolerances track that
        for order, atol in ((1, 1e-9), (2, 5e-7), (3, 5e-6)):
            a = derivative_tensor(exact, pts, order)
            b = derivative_tensor(approx, pts, order)
            assert np.allclose(a, b, atol=atol, rtol=1e-5)

    def test_partials_of_high_order_vanish_on_low_degree(self, rng):
        p = Poly(2, {(2, 0): 1.0, (1, 1): -0.4, (0, 2): 0.3})
        f = _fd_version(p)
        pts = rng.normal(size=(4, 2))
        vals = derivative_tensor(f, pts, 3)
        assert np.max(np.abs(vals)) < 1e-6

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_quadratic_convergence(self, order):
        # smooth non-polynomial field; halving h divides the error by ~4
        def ev(q):
            return np.sin(q[:, 0]) * np.exp(0.3 * q[:, 1])
        z = np.array([[0.4, -0.2]])
        exact = {1: np.cos(0.4) * np.exp(-0.06),
                 2: -np.sin(0.4) * np.exp(-0.06),
                 3: -np.cos(0.4) * np.exp(-0.06)}[order]
        mi = [0] * order
        h0 = {1: 1e-3, 2: 1e-2, 3: 4e-2}[order]
        errs = []
        for h in (h0, h0 / 2):
            f = numeric_field("s", 1, ev, fd_steps={order: h})
            from torusq.fields import partial_batch
            errs.append(abs(partial_batch(f, z, mi)[0] - exact))
        ratio = errs[0] / errs[1]
        assert 3.0 < ratio < 5.5

    def test_richardson_beats_plain(self):
        def ev(q):
            return np.sin(q[:, 0])
        from torusq.fields import partial_batch
        z = np.array([[0.4, 0.0]])
        plain = numeric_field("s", 1, ev, fd_steps={2: 1e-2})
        rich = numeric_field("s", 1, ev, fd_steps={2: 1e-2}, richardson=True)
        e_plain = abs(partial_batch(plain, z, [0, 0])[0] + np.sin(0.4))
        e_rich = abs(partial_batch(rich, z, [0, 0])[0] + np.sin(0.4))
        assert e_rich < e_plain / 50

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4),
           st.integers(0, 3), st.integers(0, 3))
    def test_mixed_partials_symmetric(self, coords, i, j):
        p = (Poly.var(0, 4) ** 2 * Poly.var(3, 4) + Poly.var(1, 4) * Poly.var(2, 4) ** 2
             + Poly.var(0, 4) * Poly.var(1, 4) * Poly.var(2, 4))
        f = _fd_version(p)
        z = np.asarray([coords])
        from torusq.fields import partial_batch
        ab = partial_batch(f, z, [i, j])[0]
        ba = partial_batch(f, z, [j, i])[0]
        assert ab == pytest.approx(ba, abs=1e-9)

    def test_periodic_field_lift(self):
        # angle-valued field with a wrap at 0: differences must cross smoothly
        def ev(q):
            return np.mod(q[:, 0], 2 * np.pi)
        f = numeric_field("ang", 1, ev, period=2 * np.pi)
        from torusq.fields import partial_batch
        z = np.array([[1e-7, 0.0]])       # right at the wrap
        val = partial_batch(f, z, [0])[0]
        assert val == pytest.approx(1.0, rel=1e-8)
