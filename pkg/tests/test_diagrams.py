import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusq.diagrams import (
    Diagram,
    chain,
    closed_loop_batch,
    eval_diagram,
    eval_diagram_batch,
    moyal_bracket,
    moyal_bracket_batch,
)
from torusq.fields import DerivativeOrderError, PhasePoint, polynomial_field
from torusq.poly import Poly


def action_poly(j, dim_n):
    x = Poly.var(j, 2 * dim_n)
    p = Poly.var(dim_n + j, 2 * dim_n)
    return (x * x + p * p) * 0.5


I1 = polynomial_field(action_poly(0, 2), "I1")
I2 = polynomial_field(action_poly(1, 2), "I2")
X1 = polynomial_field(Poly.var(0, 2), "x1")
P1 = polynomial_field(Poly.var(1, 2), "p1")


class TestBasics:
    def test_single_node_is_value(self, rng):
        z = PhasePoint(rng.normal(size=4))
        d = Diagram((I1,))
        assert eval_diagram(d, z) == pytest.approx(0.5 * (z.coords[0] ** 2 + z.coords[2] ** 2))

    def test_self_loop_vanishes(self, rng):
        # an arrow that begins and terminates on the same node contracts a
        # symmetric tensor with the antisymmetric Poisson tensor
        f = polynomial_field(
            Poly(4, {(2, 1, 0, 0): 1.0, (0, 1, 1, 1): -0.3, (1, 0, 2, 0): 0.8}), "f")
        d = Diagram((f,), ((0, 0, 1),))
        pts = rng.normal(size=(6, 4))
        assert np.max(np.abs(eval_diagram_batch(d, pts))) == 0.0

    def test_double_self_loop_vanishes(self, rng):
        d = Diagram((I1,), ((0, 0, 2),))
        assert np.max(np.abs(eval_diagram_batch(d, rng.normal(size=(4, 4))))) == 0.0

    def test_distinct_oscillator_actions_disconnect(self, rng):
        d = chain(I1, I2)
        assert np.max(np.abs(eval_diagram_batch(d, rng.normal(size=(10, 4))))) == 0.0

    def test_node_order_cap(self):
        d = Diagram((I1, I1), ((0, 1, 4), (1, 0, 1)))
        with pytest.raises(DerivativeOrderError):
            eval_diagram(d, PhasePoint(np.ones(4)))

    def test_disconnected_product(self, rng):
        # two disconnected single nodes evaluate to the product of values
        z = rng.normal(size=4)
        d = Diagram((I1, I2))
        got = eval_diagram(d, PhasePoint(z))
        want = 0.5 * (z[0] ** 2 + z[2] ** 2) * 0.5 * (z[1] ** 2 + z[3] ** 2)
        assert got == pytest.approx(want)


class TestMoyalBrackets:
    def test_first_bracket_of_field_with_itself(self, rng):
        z = PhasePoint(rng.normal(size=4))
        assert moyal_bracket(I1, I1, 1, z) == 0.0

    def test_canonical_bracket(self, rng):
        z = PhasePoint(rng.normal(size=2))
        assert moyal_bracket(X1, P1, 1, z) == pytest.approx(1.0)

    def test_order_validation(self):
        with pytest.raises(DerivativeOrderError):
            moyal_bracket(X1, P1, 5, PhasePoint(np.zeros(2)))

    def test_second_bracket_brute_force_oracle(self, rng):
        # {A,B}_2 = sum_{mu nu alpha beta} A_{,mu nu} J^{mu alpha} J^{nu beta} B_{,alpha beta},
        # expanded termwise with exact polynomial partials
        a = Poly(2, {(3, 0): 0.7, (1, 2): -0.4, (2, 1): 0.2})
        b = Poly(2, {(0, 3): 1.1, (2, 1): 0.5, (1, 1): -0.6})
        j = np.array([[0.0, 1.0], [-1.0, 0.0]])
        pts = rng.normal(size=(8, 2))
        brute = np.zeros(8)
        for mu, nu, al, be in itertools.product(range(2), repeat=4):
            brute += (a.partial([mu, nu])(pts) * j[mu, al] * j[nu, be]
                      * b.partial([al, be])(pts))
        fa, fb = polynomial_field(a, "a"), polynomial_field(b, "b")
        got = moyal_bracket_batch(fa, fb, 2, pts)
        assert np.allclose(got, brute, atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2), st.integers(0, 2), st.integers(1, 2))
    def test_odd_brackets_of_action_functions_vanish(self, ka, kb, n_odd):
        # polynomial functions of the oscillator actions commute as operators,
        # so every odd-order bracket vanishes identically
        rng = np.random.default_rng(ka * 9 + kb * 3 + n_odd)
        f_poly = (action_poly(0, 2) ** ka) * (action_poly(1, 2) ** (2 - ka)) * 0.6
        g_poly = action_poly(0, 2) ** kb * 1.3 + action_poly(1, 2) * 0.4
        f, g = polynomial_field(f_poly, "f"), polynomial_field(g_poly, "g")
        order = 2 * n_odd - 1        # 1 or 3
        pts = rng.normal(size=(20, 4))
        vals = moyal_bracket_batch(f, g, order, pts)
        scale = max(1.0, np.max(np.abs(f_poly(pts))) * np.max(np.abs(g_poly(pts))))
        assert np.max(np.abs(vals)) < 1e-10 * scale


class TestStructure:
    def test_arrow_reversal_negates(self, rng):
        a = polynomial_field(Poly(4, {(2, 0, 1, 0): 1.0, (0, 1, 0, 2): -0.5}), "a")
        b = polynomial_field(Poly(4, {(1, 1, 0, 1): 0.8, (0, 2, 1, 0): 0.3}), "b")
        c = polynomial_field(Poly(4, {(1, 0, 1, 1): -0.9}), "c")
        pts = rng.normal(size=(5, 4))
        base = Diagram((a, b, c), ((0, 1, 1), (1, 2, 1)))
        flipped = Diagram((a, b, c), ((1, 0, 1), (1, 2, 1)))
        assert np.allclose(eval_diagram_batch(base, pts),
                           -eval_diagram_batch(flipped, pts), atol=1e-12)

    def test_linear_in_each_node(self, rng):
        a = Poly(4, {(2, 0, 1, 0): 1.0})
        a2 = Poly(4, {(0, 1, 0, 2): -0.7, (1, 0, 0, 1): 0.2})
        b = Poly(4, {(1, 1, 0, 1): 0.8})
        pts = rng.normal(size=(5, 4))

        def val(p):
            return eval_diagram_batch(chain(polynomial_field(p, "n"),
                                            polynomial_field(b, "b")), pts)

        lhs = val(a + a2 * 2.5)
        rhs = val(a) + 2.5 * val(a2)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_closed_loop_on_single_field_vanishes(self, rng):
        f = polynomial_field(Poly(4, {(2, 1, 1, 0): 1.4, (1, 0, 2, 1): -0.6}), "f")
        d = Diagram((f,))
        vals = closed_loop_batch(d, 0, 0, rng.normal(size=(6, 4)))
        assert np.max(np.abs(vals)) == 0.0
