import numpy as np
import pytest

from schurkit import blocks, precond
from schurkit import krylov as gmres


def make_system(seed, sizes, **flags):
    return blocks.random_system(blocks.SystemOptions(seed=seed, sizes=sizes,
                                                     **flags))


class TestGmres:
    def test_identity_one_iteration(self):
        op = gmres.LinearOperator.from_dense(np.eye(7))
        b = np.arange(1.0, 8.0)
        x, stats = gmres.gmres(op, None, b, tol=1e-12, maxit=20)
        assert stats.iterations == 1
        assert stats.converged
        assert np.abs(x - b).max() < 1e-12

    def test_zero_rhs(self):
        op = gmres.LinearOperator.from_dense(np.eye(3))
        x, stats = gmres.gmres(op, None, np.zeros(3), tol=1e-10, maxit=5)
        assert stats.converged and stats.iterations == 0
        assert np.abs(x).max() == 0.0

    def test_degree_three_operator_terminates_in_three(self):
        s = make_system(51, (6, 5, 4))
        op = gmres.LinearOperator.from_dense(blocks.assemble(s))
        p = precond.make_preconditioner("P1", s)
        b = np.ones(op.dim)
        x, stats = gmres.gmres(op, p, b, tol=1e-12, maxit=50)
        assert stats.converged
        assert stats.iterations <= 3

    def test_unpreconditioned_spd_matches_direct_solve(self):
        rng = np.random.default_rng(52)
        m = rng.uniform(-1.0, 1.0, (50, 50))
        a = m @ m.T + 50 * np.eye(50)
        b = rng.uniform(-1.0, 1.0, 50)
        op = gmres.LinearOperator.from_dense(a)
        x, stats = gmres.gmres(op, None, b, tol=1e-10, maxit=50)
        assert stats.converged
        assert np.abs(x - np.linalg.solve(a, b)).max() < 1e-8

    def test_residual_history_monotone(self):
        rng = np.random.default_rng(53)
        a = rng.uniform(-1.0, 1.0, (40, 40)) + 8 * np.eye(40)
        b = rng.uniform(-1.0, 1.0, 40)
        op = gmres.LinearOperator.from_dense(a)
        _, stats = gmres.gmres(op, None, b, tol=1e-12, maxit=40)
        hist = stats.residuals
        assert hist[0] == 1.0
        assert all(x >= y for x, y in zip(hist, hist[1:]))
        assert stats.converged and hist[-1] <= 1e-12

    def test_happy_breakdown_exact_solution(self):
        # rhs spanned by two eigenvectors: exact after two steps
        a = np.diag([1.0, 2.0, 3.0, 4.0])
        b = np.array([1.0, 1.0, 0.0, 0.0])
        op = gmres.LinearOperator.from_dense(a)
        x, stats = gmres.gmres(op, None, b, tol=1e-13, maxit=10)
        assert stats.converged
        assert stats.iterations <= 2
        assert np.abs(a @ x - b).max() < 1e-12

    def test_breakdown_on_singular_operator(self):
        op = gmres.LinearOperator(3, lambda v: np.zeros(3))
        with pytest.raises(gmres.GmresBreakdownError):
            gmres.gmres(op, None, np.ones(3), tol=1e-10, maxit=5)

    def test_nonconvergence_reported(self):
        rng = np.random.default_rng(54)
        a = rng.uniform(-1.0, 1.0, (30, 30)) + 6 * np.eye(30)
        op = gmres.LinearOperator.from_dense(a)
        _, stats = gmres.gmres(op, None, rng.uniform(-1, 1, 30),
                               tol=1e-14, maxit=3)
        assert not stats.converged
        assert stats.iterations == 3
        assert stats.residuals[-1] > 1e-14

    def test_bad_inputs(self):
        op = gmres.LinearOperator.from_dense(np.eye(3))
        with pytest.raises(ValueError):
            gmres.gmres(op, None, np.ones(4), tol=1e-8, maxit=5)
        with pytest.raises(ValueError):
            gmres.gmres(op, None, np.ones(3), tol=0.0, maxit=5)


DEGREE_BOUNDS = [
    ("P1", 3, {}), ("P2", 3, {}), ("P3", 3, {}), ("P4", 3, {}),
    ("PD1", 6, {"zero_tail": True}), ("PD2", 6, {"zero_tail": True}),
    ("PD3", 6, {"zero_tail": True}), ("PD4", 6, {"zero_tail": True}),
]


class TestFiniteTermination:
    @pytest.mark.parametrize("name,degree,flags", DEGREE_BOUNDS)
    def test_nested_presets(self, name, degree, flags):
        s = make_system(55, (6, 5, 4), **flags)
        op = gmres.LinearOperator.from_dense(blocks.assemble(s))
        p = precond.make_preconditioner(name, s)
        b = np.ones(op.dim)
        _, stats = gmres.gmres(op, p, b, tol=1e-12, maxit=40)
        assert stats.converged and stats.iterations <= degree

    @pytest.mark.parametrize("name,degree,flags", [
        ("Q1", 2, {}), ("Q2", 2, {}),
        ("QD1", 3, {"zero_middle": True}), ("QD2", 3, {"zero_middle": True}),
    ])
    def test_additive_presets(self, name, degree, flags):
        s = make_system(56, (6, 4, 5), **flags)
        arrow, _ = blocks.permute_threeblock(s)
        op = gmres.LinearOperator.from_dense(blocks.assemble_arrowhead(arrow))
        p = precond.make_preconditioner(name, arrow)
        b = np.ones(op.dim)
        _, stats = gmres.gmres(op, p, b, tol=1e-12, maxit=40)
        assert stats.converged and stats.iterations <= degree

    @pytest.mark.parametrize("n", range(2, 9))
    def test_n_block_triangular(self, n):
        sizes = tuple(((5, 4, 3, 2) * 2)[:n])
        s = make_system(57, sizes)
        op = gmres.LinearOperator.from_dense(blocks.assemble(s))
        p = precond.make_preconditioner("Pn", s)
        b = np.ones(op.dim)
        _, stats = gmres.gmres(op, p, b, tol=1e-12, maxit=40)
        assert stats.converged and stats.iterations <= n

    def test_additive_never_slower_than_nested_triangular(self):
        for seed in range(5):
            s = make_system(80 + seed, (5, 4, 3))
            op = gmres.LinearOperator.from_dense(blocks.assemble(s))
            p = precond.make_preconditioner("P1", s)
            b = np.ones(op.dim)
            _, st_nested = gmres.gmres(op, p, b, tol=1e-12, maxit=40)
            arrow, _ = blocks.permute_threeblock(s)
            opq = gmres.LinearOperator.from_dense(blocks.assemble_arrowhead(arrow))
            q = precond.make_preconditioner("Q1", arrow)
            _, st_add = gmres.gmres(opq, q, np.ones(opq.dim), tol=1e-12, maxit=40)
            assert st_add.iterations <= st_nested.iterations


class TestIterationTable:
    def test_single_identity_cell(self):
        cells = [("sys", "I", gmres.LinearOperator.from_dense(np.eye(4)),
                  None, np.ones(4))]
        table = gmres.iteration_count_matrix(cells, tol=1e-10, maxit=10)
        assert table.counts == [[1]]

    def test_two_preconditioners_one_system(self):
        s = make_system(58, (5, 4, 3), zero_tail=True)
        a = blocks.assemble(s)
        op = gmres.LinearOperator.from_dense(a)
        b = np.ones(a.shape[0])
        cells = [
            ("sys", "Pn", op, precond.make_preconditioner("Pn", s), b),
            ("sys", "PD1", op, precond.make_preconditioner("PD1", s), b),
        ]
        table = gmres.iteration_count_matrix(cells, tol=1e-12, maxit=40)
        assert table.col_labels == ["Pn", "PD1"]
        assert table.counts[0][0] <= 3
        assert table.counts[0][1] <= 6

    def test_nonconvergence_sentinel(self):
        rng = np.random.default_rng(59)
        a = rng.uniform(-1.0, 1.0, (20, 20)) + 5 * np.eye(20)
        cells = [("s", "none", gmres.LinearOperator.from_dense(a), None,
                  rng.uniform(-1, 1, 20))]
        table = gmres.iteration_count_matrix(cells, tol=1e-14, maxit=2)
        assert table.counts[0][0] is None
        assert table.cell_text(0, 0) == ">2"

    def test_breakdown_recorded_as_sentinel(self):
        op = gmres.LinearOperator(3, lambda v: np.zeros(3))
        cells = [("s", "z", op, None, np.ones(3))]
        table = gmres.iteration_count_matrix(cells, tol=1e-8, maxit=5)
        assert table.counts[0][0] is None

    def test_csv_and_markdown_emission(self):
        cells = [("r1", "c1", gmres.LinearOperator.from_dense(np.eye(3)),
                  None, np.ones(3))]
        table = gmres.iteration_count_matrix(cells, tol=1e-8, maxit=5,
                                             header_notes=("note a",))
        csv = table.to_csv_lines()
        assert csv[0].startswith("#")
        assert "system,c1" in csv
        assert csv[-1] == "r1,1"
        md = table.to_markdown_lines()
        assert md[-1].startswith("| r1")

    def test_empty_cells_rejected(self):
        with pytest.raises(ValueError):
            gmres.iteration_count_matrix([], tol=1e-8, maxit=5)
