import numpy as np
import pytest

from schurkit import blocks, dense, precond, verify


def scalar_threeblock():
    return blocks.BlockTridiagonalSystem(
        diag=([[1.0]], [[1.0]], [[1.0]]),
        upper=([[1.0]], [[1.0]]),
        lower=([[1.0]], [[1.0]]),
    )


def assemble_preconditioner_dense(name, sys, chain):
    """Assemble the preconditioner itself as a dense matrix (oracle)."""
    family, dsign, gsign = precond.preset_pattern(name, n=sys.n)
    sizes = sys.sizes
    offs = np.concatenate(([0], np.cumsum(sizes)))
    m = np.zeros((offs[-1], offs[-1]))
    for i in range(sys.n):
        m[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = dsign[i] * chain.blocks[i]
    if family == "triangular":
        for i in range(sys.n - 1):
            m[offs[i + 1]:offs[i + 2], offs[i]:offs[i + 1]] = (
                gsign[i] * sys.lower[i])
    return m


class TestNestedChain:
    def test_scalar_recursion(self):
        chain = precond.nested_chain(scalar_threeblock())
        assert [b.item() for b in chain.blocks] == [1.0, 2.0, 1.5]

    def test_zero_tail_identity(self):
        k = 3
        eye = np.eye(k)
        sys3 = blocks.BlockTridiagonalSystem(
            diag=(eye, np.zeros((k, k)), np.zeros((k, k))),
            upper=(eye, eye), lower=(eye, eye))
        chain = precond.nested_chain(sys3)
        assert np.allclose(chain.blocks[1], eye, atol=1e-15)
        assert np.allclose(chain.blocks[2], eye, atol=1e-15)

    def test_against_explicit_inverse_oracle(self):
        opts = blocks.SystemOptions(seed=41, sizes=(2, 2, 2))
        s = blocks.random_system(opts)
        a1 = s.diag[0]
        det = a1[0, 0] * a1[1, 1] - a1[0, 1] * a1[1, 0]
        inv = np.array([[a1[1, 1], -a1[0, 1]], [-a1[1, 0], a1[0, 0]]]) / det
        s2 = s.diag[1] + s.lower[0] @ inv @ s.upper[0]
        chain = precond.nested_chain(s)
        assert np.abs(chain.blocks[1] - s2).max() < 1e-13

    def test_singular_schur_index(self):
        sys3 = blocks.BlockTridiagonalSystem(
            diag=([[0.0]], [[1.0]], [[1.0]]),
            upper=([[1.0]], [[1.0]]), lower=([[1.0]], [[1.0]]))
        with pytest.raises(precond.SingularSchurError) as exc:
            precond.nested_chain(sys3)
        assert exc.value.index == 1


class TestAdditiveSchur:
    def test_scalar_sum(self):
        arrow = blocks.ArrowheadSystem(
            leading=([[1.0]], [[1.0]]),
            border_rows=([[1.0]], [[1.0]]), border_cols=([[1.0]], [[1.0]]),
            corner=[[0.0]], leading_signs=(1, 1), corner_sign=-1)
        assert precond.additive_schur(arrow).schur.item() == 2.0

    def test_zero_borders_returns_corner(self):
        eye = np.eye(2)
        z = np.zeros((2, 2))
        arrow = blocks.ArrowheadSystem(
            leading=(eye, eye), border_rows=(z, z), border_cols=(z, z),
            corner=eye, leading_signs=(1, 1), corner_sign=-1)
        assert np.array_equal(precond.additive_schur(arrow).schur, eye)

    def test_against_dense_inverse_oracle(self):
        opts = blocks.SystemOptions(seed=42, sizes=(4, 3, 2))
        s = blocks.random_system(opts)
        arrow, _ = blocks.permute_threeblock(s)
        ad = precond.additive_schur(arrow)
        oracle = (s.diag[1]
                  + s.lower[0] @ np.linalg.inv(s.diag[0]) @ s.upper[0]
                  + s.upper[1] @ np.linalg.inv(s.diag[2]) @ s.lower[1])
        assert np.abs(ad.schur - oracle).max() < 1e-12

    def test_singular_leading_block(self):
        arrow = blocks.ArrowheadSystem(
            leading=([[0.0]],), border_rows=([[1.0]],), border_cols=([[1.0]],),
            corner=[[1.0]])
        with pytest.raises(precond.SingularLeadingBlockError) as exc:
            precond.additive_schur(arrow)
        assert exc.value.index == 1


class TestMakePreconditioner:
    def test_p1_forward_substitution_example(self):
        sys3 = scalar_threeblock()
        p = precond.make_preconditioner("P1", sys3)
        y = p.apply(np.array([1.0, 0.0, 0.0]))
        # forward substitution on [[1,0,0],[1,-2,0],[0,1,1.5]]
        assert np.allclose(y, [1.0, 0.5, -1.0 / 3.0], atol=1e-15)

    def test_dn_single_block_is_plain_solve(self):
        f = dense.lu_factor(np.array([[4.0]]))
        p = precond.make_preconditioner(
            "Dn", sizes=(1,), solves=[lambda v: dense.lu_solve(f, v)])
        assert p.apply(np.array([8.0])) == pytest.approx([2.0])

    def test_qd1_zero_borders_is_blockdiag_solve(self):
        a = np.diag([2.0, 4.0])
        corner = np.diag([8.0])
        z12 = np.zeros((1, 2))
        z21 = np.zeros((2, 1))
        arrow = blocks.ArrowheadSystem(
            leading=(a,), border_rows=(z12,), border_cols=(z21,),
            corner=corner, leading_signs=(1,), corner_sign=-1)
        p = precond.make_preconditioner("QD1", arrow)
        # S = -corner_sign*corner = +8; QD1 solves diag(A, S)
        y = p.apply(np.array([2.0, 4.0, 8.0]))
        assert np.allclose(y, [1.0, 1.0, 1.0], atol=1e-15)

    def test_unknown_preset(self):
        with pytest.raises(precond.UnknownPresetError):
            precond.make_preconditioner("BOGUS", scalar_threeblock())

    def test_missing_solver(self):
        with pytest.raises(precond.MissingSolverError) as exc:
            precond.BlockDiagonalPreconditioner(
                (1, 1), [lambda v: v, None], (1, 1))
        assert exc.value.index == 2

    def test_three_block_preset_rejects_other_n(self):
        opts = blocks.SystemOptions(seed=1, sizes=(2, 2, 2, 2))
        s = blocks.random_system(opts)
        with pytest.raises(precond.UnknownPresetError):
            precond.make_preconditioner("P1", s)


class TestApply:
    def test_identity_preconditioner(self):
        p = precond.IdentityPreconditioner(4)
        v = np.arange(4.0)
        assert np.array_equal(p.apply(v), v)

    def test_pd3_scalar_chain(self):
        p = precond.make_preconditioner("PD3", scalar_threeblock())
        y = p.apply(np.ones(3))
        assert np.allclose(y, [1.0, -0.5, 2.0 / 3.0], atol=1e-15)

    @pytest.mark.parametrize("name", precond.NESTED_PRESETS[:8])
    def test_exact_apply_matches_dense_inverse(self, name):
        opts = blocks.SystemOptions(seed=43, sizes=(4, 3, 2),
                                    zero_tail=name.startswith("PD"))
        s = blocks.random_system(opts)
        chain = precond.nested_chain(s)
        p = precond.make_preconditioner(name, s, chain)
        pm = assemble_preconditioner_dense(name, s, chain)
        rng = np.random.default_rng(44)
        v = rng.uniform(-1.0, 1.0, p.dim)
        oracle = np.linalg.solve(pm, v)
        got = p.apply(v)
        assert np.abs(got - oracle).max() <= 1e-11 * max(1.0, np.abs(oracle).max())

    @pytest.mark.parametrize("name,corner_sign", [
        ("Q1", -1), ("Q2", 1), ("QD1", 1), ("QD2", -1)])
    def test_additive_apply_matches_dense_inverse(self, name, corner_sign):
        opts = blocks.SystemOptions(seed=49, sizes=(4, 3, 2))
        s = blocks.random_system(opts)
        arrow, _ = blocks.permute_threeblock(s)
        ad = precond.additive_schur(arrow)
        p = precond.make_preconditioner(name, arrow, ad)
        na = 4 + 2
        pm = np.zeros((9, 9))
        pm[:4, :4] = arrow.leading[0]
        pm[4:na, 4:na] = arrow.leading[1]
        pm[na:, na:] = corner_sign * ad.schur
        if name in ("Q1", "Q2"):
            pm[na:, :4] = arrow.border_rows[0]
            pm[na:, 4:na] = arrow.border_rows[1]
        rng = np.random.default_rng(50)
        v = rng.uniform(-1.0, 1.0, 9)
        oracle = np.linalg.solve(pm, v)
        assert np.abs(p.apply(v) - oracle).max() <= 1e-11 * max(
            1.0, np.abs(oracle).max())


class TestPreconditionedMatrix:
    def test_p1_structure(self):
        opts = blocks.SystemOptions(seed=45, sizes=(4, 3, 2))
        s = blocks.random_system(opts)
        chain = precond.nested_chain(s)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("P1", s, chain), s)
        rel = np.abs(t).max()
        # unit diagonal blocks, vanishing strictly-lower blocks
        assert np.abs(t[:4, :4] - np.eye(4)).max() <= 1e-11 * rel
        assert np.abs(t[4:7, 4:7] - np.eye(3)).max() <= 1e-11 * rel
        assert np.abs(t[7:, 7:] - np.eye(2)).max() <= 1e-11 * rel
        assert np.abs(t[4:, :4]).max() <= 1e-11 * rel
        assert np.abs(t[7:, 4:7]).max() <= 1e-11 * rel
        b12 = np.linalg.solve(s.diag[0], np.asarray(s.upper[0]))
        b23 = -np.linalg.solve(chain.blocks[1], np.asarray(s.upper[1]))
        assert np.abs(t[:4, 4:7] - b12).max() <= 1e-11 * rel
        assert np.abs(t[4:7, 7:] - b23).max() <= 1e-11 * rel

    def test_full_lu_preconditioner_gives_identity(self):
        opts = blocks.SystemOptions(seed=46, sizes=(3, 2, 2))
        s = blocks.random_system(opts)
        a = blocks.assemble(s)
        f = dense.lu_factor(a)

        class FullSolve(precond.Preconditioner):
            def apply(self, v):
                return dense.lu_solve(f, v)

        t = precond.preconditioned_matrix(FullSolve((a.shape[0],)), s)
        assert np.abs(t - np.eye(a.shape[0])).max() < 1e-11

    def test_q1_upper_triangular_with_identity_diagonal(self):
        opts = blocks.SystemOptions(seed=47, sizes=(4, 3, 2))
        s = blocks.random_system(opts)
        arrow, _ = blocks.permute_threeblock(s)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("Q1", arrow), arrow)
        na = 4 + 2
        rel = np.abs(t).max()
        assert np.abs(t[na:, :na]).max() <= 1e-11 * rel
        assert np.abs(np.diag(t) - 1.0).max() <= 1e-11 * rel

    def test_size_guard(self):
        p = precond.IdentityPreconditioner(precond.PRECOND_SIZE_LIMIT + 1)
        with pytest.raises(ValueError):
            precond.preconditioned_matrix(
                p, np.eye(precond.PRECOND_SIZE_LIMIT + 1))


class TestLdu:
    @pytest.mark.parametrize("n", range(2, 9))
    def test_reconstruction(self, n):
        sizes = tuple(((5, 3, 4, 2) * 2)[:n])
        opts = blocks.SystemOptions(seed=48 + n, sizes=sizes)
        s = blocks.random_system(opts)
        a = blocks.assemble(s)
        l, d, u = precond.build_ldu(s)
        err = dense.frobenius(l @ d @ u - a) / dense.frobenius(a)
        assert err <= 1e-11
        # structure: unit triangular factors, block-diagonal middle
        assert np.abs(np.diag(l) - 1.0).max() == 0.0
        assert np.abs(np.diag(u) - 1.0).max() == 0.0
        assert np.abs(np.triu(l, 1)).max() == 0.0
        assert np.abs(np.tril(u, -1)).max() == 0.0


class TestAnnihilationStructure:
    @pytest.mark.parametrize("n", range(2, 9))
    def test_pn_nilpotency(self, n):
        sizes = tuple(((4, 3, 5, 2) * 2)[:n])
        opts = blocks.SystemOptions(seed=60 + n, sizes=sizes)
        s = blocks.random_system(opts)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("Pn", s), s)
        factors = verify.predicted_polynomial("Pn", n=n)
        assert verify.annihilation_residual(t, factors) <= 1e-9

    def test_q2_two_sided_factorization(self):
        opts = blocks.SystemOptions(seed=70, sizes=(4, 3, 2))
        s = blocks.random_system(opts)
        arrow, _ = blocks.permute_threeblock(s)
        t = precond.preconditioned_matrix(
            precond.make_preconditioner("Q2", arrow), arrow)
        eye = np.eye(t.shape[0])
        resid = dense.frobenius((t - eye) @ (t + eye))
        assert resid / (1.0 + dense.frobenius(t)) ** 2 <= 1e-11
