import numpy as np
import pytest

from torusq.chart import TorusChart
from torusq.diagrams import Diagram, DerivativeCache, chain, eval_diagram_batch
from torusq.fields import polynomial_field
from torusq.oracle import exact_spectrum, exact_spectrum_1d
from torusq.poly import Poly
from torusq.potentials import OneDPotential
from torusq.quantize import (
    AngleShiftedChart,
    EigenvalueTable,
    QuantizationRequest,
    _assemble_correction,
    _grid_points,
    all_corrections,
    angle_origin_invariance_test,
    chart_coordinate_partial,
    connection_coefficients,
    correction_terms,
    ebk_eigenvalues,
    gamma_raised,
    hard_diagram_via_gamma,
    hard_term_batch,
    reduce_1d,
    second_order_correction,
    torus_average,
)


class TestTorusAverage:
    def test_average_of_one(self, quartic_chart):
        val = torus_average(lambda q: np.ones(q.shape[0]), quartic_chart, np.array([0.4, 0.3]))
        assert val == pytest.approx(1.0, abs=1e-14)

    def test_angle_derivative_averages_to_zero(self, quartic_chart):
        h = quartic_chart.h_field
        x = Diagram((h, h), ((0, 1, 2),))
        fn = lambda q: chart_coordinate_partial(
            quartic_chart, lambda p: eval_diagram_batch(x, p), q, 0)
        val = torus_average(fn, quartic_chart, np.array([0.4, 0.3]), atol=1e-7)
        assert abs(val) < 1e-7

    def test_angle_arrow_average_is_action_derivative(self, quartic_chart):
        # <phi^k -> (X)>_phi = d<X>_phi / dA^k
        a = np.array([0.4, 0.3])
        h = quartic_chart.h_field
        x = Diagram((h, h), ((0, 1, 2),))
        angles = quartic_chart.angle_fields()
        for k in range(2):
            def lhs_fn(q, k=k):
                tot = np.zeros(q.shape[0])
                for i in range(2):
                    aug = Diagram((angles[k], h, h), ((1, 2, 2), (0, i + 1, 1)))
                    tot += eval_diagram_batch(aug, q)
                return tot
            lhs = torus_average(lhs_fn, quartic_chart, a, atol=1e-9)
            ha = 1e-4
            up, dn = a.copy(), a.copy()
            up[k] += ha
            dn[k] -= ha
            rhs = (torus_average(x, quartic_chart, up) - torus_average(x, quartic_chart, dn)) / (2 * ha)
            assert lhs == pytest.approx(rhs, abs=1e-7)

    def test_scalar_field_integrand(self, quartic_chart):
        val = torus_average(quartic_chart.l_field, quartic_chart, np.array([0.4, 0.3]))
        assert val == pytest.approx(0.3, abs=1e-12)

    def test_nonconvergence_reported(self, quartic_chart):
        # a discontinuous-on-torus integrand cannot meet the tolerance
        bad = lambda q: (q[:, 0] > 0.13).astype(float)
        with pytest.raises(RuntimeError):
            torus_average(bad, quartic_chart, np.array([0.4, 0.3]),
                          rtol=1e-14, atol=1e-15, max_doublings=2)


class TestCorrections:
    def test_isotropic_corrections_vanish(self, iso_chart):
        corr = all_corrections(iso_chart, np.array([0.15, 0.2]))
        assert abs(corr[0]) < 1e-6
        assert corr[1] == 0.0

    def test_second_observable_correction_zero_quartic(self, quartic_chart):
        # the loop term on the angular momentum node carries three derivatives
        # of a quadratic function
        corr = all_corrections(quartic_chart, np.array([0.25, 0.2]))
        assert corr[1] == 0.0
        assert corr[0] != 0.0

    def test_constant_symbol_correction_shifts_exactly(self, quartic_chart):
        a = np.array([0.25, 0.2])
        base = all_corrections(quartic_chart, a)
        shift = polynomial_field(Poly.const(4, 0.37), "H2const")
        shifted = all_corrections(quartic_chart, a, h2_fields=(shift,))
        assert shifted[0] - base[0] == pytest.approx(0.37, abs=1e-12)
        assert shifted[1] == base[1]

    def test_matches_brute_force_average(self, quartic_chart):
        # independent path: average the assembled integrand with plain means
        # on a fixed fine grid (no doubling machinery)
        a = np.array([0.3, 0.25])
        w, w3, w4 = quartic_chart.frequency_data(a)
        pts = _grid_points(quartic_chart, a, (48, 48))
        terms = correction_terms(quartic_chart, pts)
        brute = float(np.mean(_assemble_correction(terms, w, w3, w4, 0, None)))
        val = second_order_correction(quartic_chart, a, 0)
        assert val == pytest.approx(brute, rel=1e-6, abs=1e-9)


class TestEigenvalues:
    def test_isotropic_lattice(self, iso_chart):
        hbar = 0.1
        qns = tuple((n, m) for n in range(3) for m in (1, -2))
        req = QuantizationRequest(chart=iso_chart, hbar=hbar, quantum_numbers=qns)
        table = ebk_eigenvalues(req)
        for row in table.rows:
            want = hbar * (2 * row.n_r + abs(row.m) + 1)
            assert row.e0_h == pytest.approx(want, rel=1e-9)
            assert abs(row.corr_h) < 1e-6 * hbar
            assert row.e_l == pytest.approx(row.m * hbar, abs=1e-12)
            assert row.corr_l == 0.0

    def test_angular_observable_exact(self, quartic_chart):
        req = QuantizationRequest(chart=quartic_chart, hbar=0.1,
                                  quantum_numbers=((0, 3), (2, -1)))
        table = ebk_eigenvalues(req)
        for row in table.rows:
            assert row.e0_l == row.m * 0.1
            assert abs(row.corr_l) < 1e-8

    def test_sector_symmetry(self, quartic_chart):
        req = QuantizationRequest(chart=quartic_chart, hbar=0.1,
                                  quantum_numbers=((1, 2), (1, -2)))
        table = ebk_eigenvalues(req)
        assert table.row(1, 2).e_h == pytest.approx(table.row(1, -2).e_h, abs=1e-11)

    def test_quartic_improves_on_ebk0(self, quartic_chart, quartic_pot):
        hbar = 0.1
        qns = ((0, 1), (1, 2))
        req = QuantizationRequest(chart=quartic_chart, hbar=hbar, quantum_numbers=qns)
        table = ebk_eigenvalues(req)
        spec = exact_spectrum(quartic_pot, hbar, [1, 2], 1)
        table.attach_oracle(spec.as_mapping())
        for row in table.rows:
            assert abs(row.e_h - row.oracle) < abs(row.e0_h - row.oracle) / 100
            assert row.error == row.e_h - row.oracle

    def test_out_of_region_state_flagged(self, quartic_pot):
        capped = TorusChart(quartic_pot, sector=+1, energy_cap=0.35)
        req = QuantizationRequest(chart=capped, hbar=0.1,
                                  quantum_numbers=((0, 1), (3, 2)))
        table = ebk_eigenvalues(req)
        assert table.row(0, 1).flagged == ""
        assert "region" in table.row(3, 2).flagged
        assert np.isnan(table.row(3, 2).e_h)

    def test_invalid_quantum_numbers(self, quartic_chart):
        with pytest.raises(ValueError):
            QuantizationRequest(chart=quartic_chart, hbar=0.1, quantum_numbers=((0, 0),))
        with pytest.raises(ValueError):
            QuantizationRequest(chart=quartic_chart, hbar=0.1, quantum_numbers=((-1, 1),))

    def test_missing_oracle_rows_left_none(self, quartic_chart):
        req = QuantizationRequest(chart=quartic_chart, hbar=0.1, quantum_numbers=((0, 1),),
                                  include_h2=False)
        table = ebk_eigenvalues(req)
        table.attach_oracle({})
        assert table.rows[0].oracle is None


class TestAngleOriginInvariance:
    def test_zero_shift(self, quartic_chart):
        res = angle_origin_invariance_test(quartic_chart, np.array([0.15, 0.1]), {})
        assert res == 0.0

    def test_quadratic_shift(self, quartic_chart):
        res = angle_origin_invariance_test(
            quartic_chart, np.array([0.15, 0.1]), {(2, 0): 1.0}, tol=1e-5)
        assert res < 1e-5

    def test_cubic_shift_average_invariant_but_pointwise_not(self, quartic_chart):
        a = np.array([0.15, 0.1])
        fc = {(3, 0): 0.5, (2, 1): 0.3}
        res = angle_origin_invariance_test(quartic_chart, a, fc, tol=1e-5)
        assert res < 1e-5
        shifted = AngleShiftedChart(quartic_chart, Poly(2, fc))
        pts = _grid_points(quartic_chart, a, (4, 4))
        w, w3, w4 = quartic_chart.frequency_data(a)
        base_vals = _assemble_correction(correction_terms(quartic_chart, pts), w, w3, w4, 0, None)
        shift_vals = _assemble_correction(correction_terms(shifted, pts), w, w3, w4, 0, None)
        assert np.max(np.abs(shift_vals - base_vals)) > 1e-5


class TestConnectionCoefficients:
    @pytest.fixture(scope="class")
    def sample(self, quartic_chart):
        rng = np.random.default_rng(11)
        pts = quartic_chart.sample_interior_points(3, rng)
        return pts

    def test_fully_symmetric(self, quartic_chart, sample):
        for z in sample:
            g = connection_coefficients(quartic_chart, z)
            for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
                assert np.max(np.abs(g - np.transpose(g, perm))) < 1e-5

    def test_raised_lowered_contraction_vanishes(self, quartic_chart, sample):
        for z in sample:
            g = connection_coefficients(quartic_chart, z)
            val = np.einsum("mns,mns->", gamma_raised(g), g)
            assert abs(val) < 1e-12

    def test_chain_dictionary(self, quartic_chart, sample):
        # three-node chains of collective coordinates read off the raised tensor
        z = sample[0]
        gup = gamma_raised(connection_coefficients(quartic_chart, z))
        cache = DerivativeCache(z[None, :])
        d_up = quartic_chart.raised_fields()
        worst = 0.0
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    v = eval_diagram_batch(chain(d_up[a], d_up[b], d_up[c]),
                                           z[None, :], cache)[0]
                    worst = max(worst, abs(v - gup[a, b, c]))
        assert worst < 3e-5

    def test_loop_term_two_routes(self, quartic_chart, sample):
        for z in sample:
            cache = DerivativeCache(z[None, :])
            for k in range(2):
                direct = hard_term_batch(quartic_chart, k, z[None, :], cache)[0]
                via_gamma = hard_diagram_via_gamma(quartic_chart, z, k)
                assert abs(direct - via_gamma) < 1e-4

    def test_isotropic_routes_both_vanish(self, iso_chart):
        z = iso_chart.torus_point(np.array([[1.1, 2.0]]), np.array([[0.4, 0.3]]))[0]
        direct = hard_term_batch(iso_chart, 0, z[None, :])[0]
        via_gamma = hard_diagram_via_gamma(iso_chart, z, 0)
        assert abs(direct) < 1e-6
        assert abs(via_gamma) < 1e-4


class TestReduce1d:
    @pytest.fixture(scope="class")
    def rows(self, oned_quartic):
        return reduce_1d(oned_quartic, 0.1, range(0, 3))

    def test_pipeline_matches_closed_form(self, rows):
        for r in rows:
            assert r.corr_pipeline == pytest.approx(r.corr_closed, rel=1e-5)

    def test_both_improve_on_ebk0(self, rows):
        pot = OneDPotential(u=(0.5, 0.01), omega0=1.0)
        exact = exact_spectrum_1d(pot, 0.1, 2)
        for r in rows:
            err0 = abs(r.e0 - exact[r.n])
            assert abs(r.e_pipeline - exact[r.n]) < err0 / 50
            assert abs(r.e_closed - exact[r.n]) < err0 / 50

    def test_harmonic_corrections_vanish(self):
        from torusq.chart1d import OneDChart
        chart = OneDChart(OneDPotential(u=(0.5,), omega0=1.0))
        rows = reduce_1d(chart, 0.1, range(0, 2))
        for r in rows:
            assert r.e0 == pytest.approx(0.1 * (r.n + 0.5), rel=1e-10)
            assert abs(r.corr_pipeline) < 1e-8
            assert abs(r.corr_closed) < 1e-8
