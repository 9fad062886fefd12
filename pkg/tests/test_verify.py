import math

import numpy as np
import pytest

from schurkit import blocks, dense, precond, verify


class TestRecurrences:
    def test_pbar_base_and_steps(self):
        pb = verify.pbar_polynomials(3)
        assert pb[1].coeffs == (-1.0, 1.0)
        assert pb[2].coeffs == (1.0, -1.0, 1.0)          # x^2 - x + 1
        assert pb[3].coeffs == (-1.0, 2.0, -1.0, 1.0)    # x^3 - x^2 + 2x - 1

    def test_ptilde_base_and_steps(self):
        pt = verify.ptilde_polynomials(3)
        assert pt[1].coeffs == (-1.0, 1.0)
        assert pt[2].coeffs == (-1.0, -1.0, 1.0)         # x^2 - x - 1
        assert pt[3].coeffs == (1.0, -2.0, -1.0, 1.0)    # x^3 - x^2 - 2x + 1

    def test_pbar_matches_diagonal_family_cubic(self):
        # the cubic factor of the alternating-sign diagonal preset
        pb3 = verify.pbar_polynomials(3)[3]
        pd3 = verify.predicted_polynomial("PD3")[2]
        assert pb3.coeffs == pd3.coeffs

    def test_ptilde_matches_plus_sign_family(self):
        pt = verify.ptilde_polynomials(3)
        pd1 = verify.predicted_polynomial("PD1")
        assert pd1[1].coeffs == pt[2].coeffs
        assert pd1[2].coeffs == pt[3].coeffs

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ValueError):
            verify.pbar_polynomials(0)


class TestPredictedPolynomials:
    def test_pd1_root_set(self):
        roots = sorted(verify.predicted_roots("PD1"),
                       key=lambda z: (z.real, z.imag))
        printed = [-1.2470, -0.6180, 0.4450, 1.0, 1.6180, 1.8019]
        assert max(abs(z - w) for z, w in zip(roots, printed)) < 1e-4
        assert max(abs(z.imag) for z in roots) < 1e-12

    def test_qd1_nonzero_roots(self):
        roots = sorted(verify.predicted_roots("QD1"),
                       key=lambda z: (z.real, z.imag))
        golden = (1 + math.sqrt(5)) / 2
        expect = [1 - golden, 0.0, 1.0, golden]
        assert max(abs(z - w) for z, w in zip(roots, expect)) < 1e-12

    def test_qd2_nonzero_roots(self):
        roots = verify.predicted_roots("QD2")
        expect = {complex(0.0), complex(1.0),
                  complex(0.5, math.sqrt(3) / 2), complex(0.5, -math.sqrt(3) / 2)}
        for z in roots:
            assert min(abs(z - w) for w in expect) < 1e-12

    def test_degrees(self):
        degree = {
            "P1": 3, "P2": 3, "P3": 3, "P4": 3,
            "PD1": 6, "PD2": 6, "PD3": 6, "PD4": 6,
            "Q1": 2, "Q2": 2, "QD1": 4, "QD2": 4,
        }
        for name, d in degree.items():
            total = sum(p.degree for p in verify.predicted_polynomial(name))
            assert total == d, name

    def test_n_family_degrees(self):
        assert sum(p.degree for p in verify.predicted_polynomial("Pn", n=5)) == 5
        assert sum(p.degree for p in verify.predicted_polynomial("Dn", n=5)) == 15
        assert sum(p.degree for p in verify.predicted_polynomial("Mn", n=5)) == 15

    def test_unknown_preset(self):
        with pytest.raises(precond.UnknownPresetError):
            verify.predicted_polynomial("NOPE")


class TestAnnihilationResidual:
    def test_identity_with_linear_factor(self):
        r = verify.annihilation_residual(np.eye(4), [verify.Polynomial((-1.0, 1.0))])
        assert r == 0.0

    def test_companion_cayley_hamilton(self):
        t = np.array([[0.0, 1.0], [1.0, 1.0]])
        r = verify.annihilation_residual(t, [verify.Polynomial((-1.0, -1.0, 1.0))])
        assert r < 1e-14

    def test_zero_tail_diagonal_preset(self):
        opts = blocks.SystemOptions(seed=81, sizes=(5, 4, 3), zero_tail=True)
        s = blocks.random_system(opts)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("PD1", s), s)
        r = verify.annihilation_residual(t, verify.predicted_polynomial("PD1"))
        assert r < 1e-9

    def test_no_factors_rejected(self):
        with pytest.raises(ValueError):
            verify.annihilation_residual(np.eye(2), [])


class TestSpectrumMembership:
    def test_exact_match(self):
        rep = verify.spectrum_membership([1.0, 1.0, 1.0], [complex(1.0)], 1e-8)
        assert rep.max_membership_distance == 0.0
        assert rep.min_real_part == 1.0

    def test_printed_roots_of_mixed_sign_diagonal(self):
        opts = blocks.SystemOptions(seed=82, sizes=(5, 4, 3), zero_tail=True)
        s = blocks.random_system(opts)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("PD2", s), s)
        eigs = dense.eigenvalues(t)
        printed = [complex(-0.618), complex(-0.2328, 0.7926),
                   complex(-0.2328, -0.7926), complex(1.0),
                   complex(1.4656), complex(1.618)]
        rep = verify.spectrum_membership(eigs, printed, 1e-3)
        assert rep.max_membership_distance < 1e-3

    def test_symmetric_spd_cosine_spectrum(self):
        target = [complex(2 * math.cos((2 * i - 1) / (2 * j + 1) * math.pi))
                  for j in (1, 2, 3) for i in range(1, j + 1)]
        opts = blocks.SystemOptions(seed=83, sizes=(6, 4, 3),
                                    zero_tail=True, symmetric_spd=True)
        s = blocks.random_system(opts)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("PD1", s), s)
        eigs = dense.eigenvalues(t)
        rep = verify.spectrum_membership(eigs, target, 1e-8)
        assert rep.max_membership_distance < 1e-8

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            verify.spectrum_membership([1.0], [complex(1.0)], 0.0)


class TestPositiveStable:
    def test_alternating_diagonal_spectrum_is_stable(self):
        eigs = [0.5698, 0.2151, 0.5, 1.0]
        assert verify.positive_stable(eigs)

    def test_all_minus_diagonal_spectrum_is_not(self):
        eigs = [complex(-0.7549), complex(1.0), complex(0.5, 0.866)]
        assert not verify.positive_stable(eigs)

    def test_singleton(self):
        assert verify.positive_stable([complex(1.0)])

    def test_margin(self):
        assert not verify.positive_stable([1e-9], margin=1e-8)


class TestRouthTable:
    def test_degree_one(self):
        t = verify.routh_table(verify.pbar_polynomials(1)[1])
        assert t.first_column == (1.0, -1.0)
        assert t.sign_changes == 1

    def test_degree_three_alternation(self):
        t = verify.routh_table(verify.pbar_polynomials(3)[3])
        assert t.first_column == (1.0, -1.0, 1.0, -1.0)
        assert t.sign_changes == 3

    def test_hurwitz_stable_quadratic(self):
        t = verify.routh_table(verify.Polynomial((1.0, 1.0, 1.0)))
        assert t.first_column == (1.0, 1.0, 1.0)
        assert t.sign_changes == 0

    def test_entry_rule_against_direct_evaluation(self):
        # x^4 - x^3 + 3x^2 - 2x + 1: rows checked against the 2x2 rule by hand
        t = verify.routh_table(verify.pbar_polynomials(4)[4])
        assert t.rows[0] == (1.0, 3.0, 1.0)
        assert t.rows[1] == (-1.0, -2.0, 0.0)
        assert t.rows[2] == (1.0, 1.0, 0.0)
        assert t.rows[3] == (-1.0, 0.0, 0.0)
        assert t.rows[4] == (1.0, 0.0, 0.0)

    def test_zero_first_column_raises(self):
        with pytest.raises(verify.ZeroFirstColumnError):
            verify.routh_table(verify.Polynomial((1.0, 0.0, 1.0)))  # x^2 + 1

    @pytest.mark.parametrize("k", range(1, 13))
    def test_alternating_unit_column(self, k):
        t = verify.routh_table(verify.pbar_polynomials(k)[k])
        assert len(t.first_column) == k + 1
        for i, v in enumerate(t.first_column):
            assert abs(v - (-1.0) ** i) <= 1e-10
        assert t.sign_changes == k


class TestCoefficientLaw:
    def test_k3(self):
        assert verify.coefficient_law_check(3)
        assert verify.pbar_polynomials(3)[3].coeffs == (-1.0, 2.0, -1.0, 1.0)

    def test_k4_expansion(self):
        assert verify.pbar_polynomials(4)[4].coeffs == (1.0, -2.0, 3.0, -1.0, 1.0)
        assert verify.coefficient_law_check(4)

    @pytest.mark.parametrize("k", range(3, 13))
    def test_range(self, k):
        assert verify.coefficient_law_check(k)

    def test_too_small(self):
        with pytest.raises(ValueError):
            verify.coefficient_law_check(2)


class TestSuite:
    @pytest.mark.parametrize("preset", verify.DEFAULT_VERIFY_PRESETS)
    def test_default_presets_pass(self, preset):
        row = verify.verify_preset(preset, 7, (4, 3, 2))
        assert row.passed, row

    @pytest.mark.parametrize("preset,seed", [
        (p, s) for p in ("P1", "PD3", "Q1", "QD2") for s in range(8)
    ])
    def test_stable_presets_many_seeds(self, preset, seed):
        row = verify.verify_preset(preset, seed, (5, 4, 2))
        assert row.passed and row.min_real_part > verify.STABILITY_MARGIN

    @pytest.mark.parametrize("n", range(2, 9))
    def test_zero_tail_alternating_diagonal_membership(self, n):
        row = verify.verify_preset("Dn", 5, (6, 4, 3), n=n)
        assert row.passed
        assert row.max_membership_distance <= verify.MEMBERSHIP_TOL_COMPUTED
        assert row.min_real_part > verify.STABILITY_MARGIN

    def test_plus_diagonal_family_unstable_witness(self):
        hits = []
        for n in range(2, 9):
            row = verify.verify_preset("Mn", 5, (6, 4, 3), n=n)
            assert row.max_membership_distance <= verify.MEMBERSHIP_TOL_COMPUTED
            hits.append(row.min_real_part <= 0.0)
        assert any(hits)

    def test_ldu_rows(self):
        rows = verify.verify_ldu(9, (4, 3, 2))
        assert len(rows) == 7
        assert all(r.passed for r in rows)

    def test_routh_rows(self):
        rows = verify.verify_routh()
        assert len(rows) == 12
        assert all(r.passed for r in rows)

    def test_report_csv_shape(self):
        rows = verify.run_suite(7, (4, 3, 2))
        lines = verify.report_csv_rows(rows)
        presets = [ln for ln in lines if ln.startswith("preset,")]
        assert len(presets) == 14
        assert lines[0].startswith("kind,name,seed")
