import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from torusq.fields import poisson_matrix
from torusq.normalform import (
    NormalFormError,
    QuadraticHamiltonianSet,
    compute_normal_form,
    delta_matrix,
    random_commuting_set,
    random_symplectic,
    validate,
)


def worked_pair(w0: float = 1.0) -> QuadraticHamiltonianSet:
    """Hessians of the balanced central-force H and of the angular momentum."""
    q1 = w0 * np.eye(4)
    q2 = np.zeros((4, 4))
    q2[0, 3] = q2[3, 0] = 1.0
    q2[1, 2] = q2[2, 1] = -1.0
    return QuadraticHamiltonianSet((q1, q2))


def match_columns(a: np.ndarray, c: np.ndarray) -> float:
    """Best column matching residual between recovered and constructed a."""
    n = a.shape[1]
    cost = np.array([[np.max(np.abs(a[:, i] - c[:, j])) for j in range(n)] for i in range(n)])
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].max())


class TestValidate:
    def test_worked_pair_ok(self):
        assert validate(worked_pair()) == []

    def test_indefinite_q1(self):
        qset = QuadraticHamiltonianSet((np.diag([1.0, -1.0, 1.0, 1.0]),
                                        worked_pair().hessians[1]))
        assert any("definite" in v for v in validate(qset))

    def test_asymmetric_detected(self):
        q1, q2 = (q.copy() for q in worked_pair().hessians)
        q2[0, 1] += 1e-3
        assert any("symmetric" in v for v in validate(QuadraticHamiltonianSet((q1, q2))))

    def test_noncommuting_detected(self, rng):
        qset, _, _ = random_commuting_set(2, rng)
        q1, q2 = (q.copy() for q in qset.hessians)
        eps = 1e-4
        q2[0, 0] += eps
        q2 = 0.5 * (q2 + q2.T)
        violations = validate(QuadraticHamiltonianSet((q1, q2)), tol=1e-8)
        assert any("!= 0" in v or "antisymmetric" in v for v in violations)

    def test_linear_dependence_detected(self):
        q1 = np.eye(4)
        qset = QuadraticHamiltonianSet((q1, 2.0 * q1))
        assert any("dependent" in v for v in validate(qset))

    def test_wrong_count_rejected(self):
        with pytest.raises(NormalFormError):
            QuadraticHamiltonianSet((np.eye(4),))


class TestWorkedPair:
    def test_recovers_coefficient_matrix(self):
        nf = compute_normal_form(worked_pair())
        assert np.allclose(nf.a, [[1.0, 1.0], [1.0, -1.0]], atol=1e-12)
        assert np.allclose(nf.lambdas, [1.0, 1.0])
        assert nf.blocks == ((1.0, 2),)

    def test_normal_form_products(self):
        qset = worked_pair()
        nf = compute_normal_form(qset)
        s = nf.S
        assert np.allclose(s.T @ qset.hessians[0] @ s, delta_matrix(0, 2) + delta_matrix(1, 2),
                           atol=1e-10)
        assert np.allclose(s.T @ qset.hessians[1] @ s, delta_matrix(0, 2) - delta_matrix(1, 2),
                           atol=1e-10)

    def test_symplectic(self):
        nf = compute_normal_form(worked_pair())
        omega = -poisson_matrix(2)
        assert np.max(np.abs(nf.S.T @ omega @ nf.S - omega)) < 1e-12

    def test_published_witness_matrix_is_valid(self):
        # one valid S (not unique): columns mixing the two planes
        s = np.array([[1, 0, 0, -1], [0, 1, -1, 0], [0, 1, 1, 0], [1, 0, 0, 1]]) / np.sqrt(2)
        qset = worked_pair()
        omega = -poisson_matrix(2)
        assert np.allclose(s.T @ omega @ s, omega)
        assert np.allclose(s.T @ qset.hessians[0] @ s, delta_matrix(0, 2) + delta_matrix(1, 2))
        assert np.allclose(s.T @ qset.hessians[1] @ s, delta_matrix(0, 2) - delta_matrix(1, 2))

    def test_omega0_scales_first_row(self):
        nf = compute_normal_form(worked_pair(w0=2.5))
        assert np.allclose(nf.a, [[2.5, 2.5], [1.0, -1.0]], atol=1e-12)


class TestDeltaInput:
    def test_single_oscillator_identity(self):
        # at N=1 the oscillator-action matrix itself is positive definite
        nf = compute_normal_form(QuadraticHamiltonianSet((delta_matrix(0, 1),)))
        assert np.allclose(nf.a, [[1.0]], atol=1e-12)
        assert np.allclose(nf.S.T @ delta_matrix(0, 1) @ nf.S, delta_matrix(0, 1), atol=1e-12)

    def test_oscillator_combination_fixed(self):
        # a positive combination for the first observable (a bare oscillator
        # matrix is only semidefinite for N > 1, outside the preconditions);
        # the rest are the oscillator matrices themselves
        q1 = 3 * delta_matrix(0, 3) + 2 * delta_matrix(1, 3) + delta_matrix(2, 3)
        qs = (q1, delta_matrix(1, 3), delta_matrix(2, 3))
        nf = compute_normal_form(QuadraticHamiltonianSet(qs))
        assert np.allclose(nf.a, [[3, 2, 1], [0, 1, 0], [0, 0, 1]], atol=1e-10)
        for k, q in enumerate(qs):
            target = sum(nf.a[k, i] * delta_matrix(i, 3) for i in range(3))
            assert np.allclose(nf.S.T @ q @ nf.S, target, atol=1e-10)


class TestRandomRoundTrip:
    @pytest.mark.parametrize("dim_n", [2, 3])
    def test_reconstruction(self, dim_n):
        for seed in range(8):
            rng = np.random.default_rng(seed)
            qset, c, _ = random_commuting_set(dim_n, rng)
            nf = compute_normal_form(qset)
            assert match_columns(nf.a, c) < 1e-8
            assert nf.residual_symplectic < 1e-10
            assert nf.residual_normal_form < 1e-8

    def test_invariance_under_symplectic_change_of_basis(self, rng):
        qset, c, _ = random_commuting_set(2, rng)
        t = random_symplectic(2, rng, scale=0.4)
        transformed = QuadraticHamiltonianSet(
            tuple(0.5 * ((t.T @ q @ t) + (t.T @ q @ t).T) for q in qset.hessians))
        nf1 = compute_normal_form(qset)
        nf2 = compute_normal_form(transformed)
        assert match_columns(nf2.a, nf1.a) < 1e-8


class TestEdgeCases:
    def test_negative_definite_q1_negated(self):
        qset = worked_pair()
        flipped = QuadraticHamiltonianSet((-qset.hessians[0], qset.hessians[1]))
        nf = compute_normal_form(flipped)
        assert nf.negated_q1
        assert np.allclose(nf.a[0], [1.0, 1.0], atol=1e-12)

    def test_frequency_sum_matches_dimension(self, rng):
        qset, _, _ = random_commuting_set(3, rng)
        nf = compute_normal_form(qset)
        assert sum(n for _, n in nf.blocks) == 3

    def test_lambdas_positive(self, rng):
        qset, _, _ = random_commuting_set(3, rng)
        nf = compute_normal_form(qset)
        assert np.all(nf.lambdas > 0)

    def test_eigenvalues_of_jq1_in_pairs(self, rng):
        qset, _, _ = random_commuting_set(2, rng)
        j = poisson_matrix(2)
        ev = np.linalg.eigvals(j @ qset.hessians[0])
        assert np.max(np.abs(np.real(ev))) < 1e-10
        lam = np.sort(np.abs(np.imag(ev)))
        assert np.allclose(lam[::2], lam[1::2])
