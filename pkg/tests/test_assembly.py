"""Block assembly, the reduced pressure system, and flux recovery."""

import numpy as np
import pytest

from mdflow.assembly import (
    assemble_blocks,
    conservation_residual,
    export_state_csv,
    face_weight,
    graph_stokes_check,
    mixed_matrix,
    read_matrix_market,
    recover_fluxes,
    schur_tpfa,
    write_matrix_market,
)
from mdflow.geometry import (
    CartesianGrid,
    SupportRegion,
    build_forest,
    build_support,
    dirichlet_root,
    terminal,
)
from mdflow.model import CoefficientField, case1

from oracles import lumped_rt0_schur_dense


def plain_coeffs(grid, supports=(), rN=None):
    return CoefficientField(
        kD=np.ones((grid.n_cells, grid.dim)),
        supports=tuple(supports),
        rD=np.zeros(grid.n_cells),
        rN=rN or {},
    )


def unit_square(m, dim=2):
    return CartesianGrid((m,) * dim, extent=(1.0,) * dim, origin=(-0.5,) * dim)


def tree_on_cell(grid, cell=0, ks=0.7):
    forest = build_forest(
        [dirichlet_root(0, 0.0), terminal(1, (0.0, 0.0))], [(0, 1, 1.0)]
    )
    sup = SupportRegion(1, np.array([cell]), np.array([ks]))
    return forest, sup


class TestFaceWeight:
    def test_unit_transmissibility_in_grid_units(self):
        # uniform 2D grid with unit kD: T = k |f| / (d1 + d2) = 1
        g = unit_square(2)
        w = face_weight(g, 0, 1.0)
        assert 1.0 / (2 * w) == pytest.approx(1.0)

    def test_doubling_k_doubles_transmissibility(self):
        g = unit_square(4)
        t1 = 1.0 / (2 * face_weight(g, 0, 1.0))
        t2 = 1.0 / (2 * face_weight(g, 0, 2.0))
        assert t2 == pytest.approx(2 * t1)

    def test_nonpositive_k_rejected(self):
        with pytest.raises(ValueError):
            face_weight(unit_square(2), 0, 0.0)

    def test_boundary_faces_carry_no_unknowns(self):
        g = unit_square(3)
        # 3x3 grid: 2*3 interior faces per axis
        assert g.n_faces == 12
        blocks = assemble_blocks(g, None, plain_coeffs(g))
        assert blocks.d_D.shape == (12,)


class TestSchurStructure:
    def test_pure_neumann_zero_row_sums(self):
        g = unit_square(2)
        A, b = schur_tpfa(assemble_blocks(g, None, plain_coeffs(g)))
        assert np.abs(A @ np.ones(A.shape[0])).max() == 0.0
        assert np.all(b == 0.0)

    def test_exact_symmetry(self):
        spec = case1("A")
        grid = spec.grid(16)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        A, _ = schur_tpfa(blocks)
        assert (A - A.T).nnz == 0 or np.abs((A - A.T).data).max() == 0.0

    def test_dimension_case1(self):
        spec = case1("A")
        grid = spec.grid(16)
        A, b = schur_tpfa(assemble_blocks(grid, spec.forest, spec.coefficients(grid)))
        assert A.shape == (257, 257)  # 256 cells + 1 free node

    def test_spd_with_dirichlet_root(self):
        spec = case1("A")
        grid = spec.grid(8)
        A, _ = schur_tpfa(assemble_blocks(grid, spec.forest, spec.coefficients(grid)))
        lam = np.linalg.eigvalsh(A.toarray())
        assert lam.min() > 0

    def test_five_point_stencil_away_from_supports(self):
        spec = case1("A")
        grid = spec.grid(16)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        A = schur_tpfa(blocks)[0].toarray()
        centers = grid.cell_centers()
        r = np.linalg.norm(centers, axis=1)
        interior = np.flatnonzero(r > 0.25)  # outside the support
        multi = grid.cell_multi_index
        inner = [
            i
            for i in interior
            if np.all(multi[i] > 0) and np.all(multi[i] < 15)
        ]
        # with unit coefficients the transmissibility is 1 in grid units
        for i in inner[:20]:
            row = A[i]
            assert row[i] == pytest.approx(4.0)
            assert sorted(row[row != 0].tolist()) == pytest.approx(
                [-1.0, -1.0, -1.0, -1.0, 4.0]
            )

    def test_single_cell_with_tree_hand_schur(self):
        # one cell, one two-node tree: eliminate fluxes by hand; the
        # coupling weight is (ks vol)^2 / vol and the root folds k into
        # the diagonal and rhs
        g = CartesianGrid((1, 1), extent=(1, 1))
        forest, sup = tree_on_cell(g, ks=0.7)
        coeffs = CoefficientField(
            kD=np.ones((1, 2)),
            supports=(sup,),
            rD=np.array([2.0]),
            rN={1: 0.5},
        )
        forest2 = build_forest(
            [dirichlet_root(0, 1.5), terminal(1, (0.0, 0.0))], [(0, 1, 3.0)]
        )
        A, b = schur_tpfa(assemble_blocks(g, forest2, coeffs))
        w = 0.7**2 * 1.0
        expected_A = np.array([[w, -w], [-w, w + 3.0]])
        expected_b = np.array([2.0, 0.5 + 3.0 * 1.5])
        assert np.allclose(A.toarray(), expected_A, atol=1e-15)
        assert np.allclose(b, expected_b, atol=1e-15)

    def test_disconnected_region_flagged(self):
        mask = np.ones((4, 4), dtype=bool)
        mask[:, 2] = False  # two disconnected strips
        g = CartesianGrid((4, 4), extent=(1, 1), mask=mask)
        blocks = assemble_blocks(g, None, plain_coeffs(g))
        assert blocks.is_singular
        assert blocks.kernel().shape[1] == 2


class TestOracleEquivalence:
    @pytest.mark.parametrize("m", [2, 3])
    @pytest.mark.parametrize("with_tree", [False, True])
    def test_matches_brute_force_lumped_rt0(self, m, with_tree):
        g = unit_square(m)
        rng = np.random.default_rng(m)
        if with_tree:
            forest = build_forest(
                [dirichlet_root(0, 0.8), terminal(1, (0.0, 0.0))], [(0, 1, 2.0)]
            )
            sup = build_support(g, 1, (0.0, 0.0), (0.2, 0.3), 1.5)
            supports = (sup,)
        else:
            forest, supports = None, ()
        coeffs = CoefficientField(
            kD=rng.uniform(0.5, 2.0, size=(g.n_cells, 2)),
            supports=supports,
            rD=rng.standard_normal(g.n_cells),
            rN={1: 0.3} if with_tree else {},
        )
        A, b = schur_tpfa(assemble_blocks(g, forest, coeffs))
        A_ref, b_ref = lumped_rt0_schur_dense(g, forest, coeffs)
        assert np.abs(A.toarray() - A_ref).max() <= 1e-13
        assert np.abs(b - b_ref).max() <= 1e-13


class TestRecoverFluxes:
    def test_zero_rhs_zero_state(self):
        g = unit_square(4)
        blocks = assemble_blocks(g, None, plain_coeffs(g))
        state = recover_fluxes(blocks, np.zeros(blocks.n_unknowns))
        assert not np.any(state.qD)
        assert not np.any(state.pD)

    def test_constitutive_relations(self):
        spec = case1("A")
        grid = spec.grid(8)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        rng = np.random.default_rng(0)
        p = rng.standard_normal(blocks.n_unknowns)
        state = recover_fluxes(blocks, p)
        # face flux is transmissibility times the pressure drop
        i = 5
        lo, hi = blocks.grid.face_lo[i], blocks.grid.face_hi[i]
        assert state.qD[i] == pytest.approx((p[lo] - p[hi]) / blocks.d_D[i])
        # edge flux reinserts the Dirichlet root value
        root_val = spec.forest.node(0).value
        pN1 = p[blocks.node_index(1)]
        assert state.qN[0] == pytest.approx(-1.0 * (pN1 - root_val))

    def test_exact_solve_conserves(self):
        spec = case1("A")
        grid = spec.grid(8)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        A, b = schur_tpfa(blocks)
        p = np.linalg.solve(A.toarray(), b)
        state = recover_fluxes(blocks, p)
        rc, rn = conservation_residual(blocks, state)
        tol = 1e-12 * np.linalg.norm(b)
        assert np.abs(rc).max() <= tol
        assert np.abs(rn).max() <= tol
        assert graph_stokes_check(blocks, state) <= 1e-10 * np.abs(b).sum()

    def test_dimension_mismatch(self):
        g = unit_square(2)
        blocks = assemble_blocks(g, None, plain_coeffs(g))
        with pytest.raises(ValueError):
            recover_fluxes(blocks, np.zeros(3))


class TestGraphStokes:
    def test_random_state_nonzero(self):
        spec = case1("A")
        grid = spec.grid(8)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        rng = np.random.default_rng(1)
        state = recover_fluxes(blocks, rng.standard_normal(blocks.n_unknowns))
        assert graph_stokes_check(blocks, state) > 1e-8

    def test_zero_state_zero_sources(self):
        g = unit_square(4)
        blocks = assemble_blocks(g, None, plain_coeffs(g))
        state = recover_fluxes(blocks, np.zeros(blocks.n_unknowns))
        assert graph_stokes_check(blocks, state) == 0.0


class TestMixedMatrix:
    def test_block_symmetry_and_shape(self):
        spec = case1("A")
        grid = spec.grid(4)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        M, rhs = mixed_matrix(blocks)
        n = grid.n_faces + blocks.sup_cell.size + 1 + grid.n_cells + 1
        assert M.shape == (n, n)
        assert np.abs((M - M.T).toarray()).max() == 0.0

    def test_schur_of_mixed_matches_reduced(self):
        spec = case1("A")
        grid = spec.grid(4)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        M, rhs = mixed_matrix(blocks)
        nq = grid.n_faces + blocks.sup_cell.size + blocks.edge_k.size
        Md = M.toarray()
        D, G = Md[:nq, :nq], Md[:nq, nq:]
        A_mixed = G.T @ np.linalg.inv(D) @ G
        A, _ = schur_tpfa(blocks)
        assert np.abs(A_mixed - A.toarray()).max() <= 1e-12


class TestExports:
    def test_matrix_market_round_trip(self, tmp_path):
        spec = case1("A")
        grid = spec.grid(8)
        A, _ = schur_tpfa(assemble_blocks(grid, spec.forest, spec.coefficients(grid)))
        path = tmp_path / "A.mtx"
        write_matrix_market(A, path)
        B = read_matrix_market(path)
        assert (A - B).nnz == 0 or np.abs((A - B).data).max() < 1e-14

    def test_state_csv_files(self, tmp_path):
        spec = case1("A")
        grid = spec.grid(4)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        state = recover_fluxes(blocks, np.zeros(blocks.n_unknowns))
        export_state_csv(blocks, state, tmp_path / "run")
        for part in ("cells", "faces", "nodes", "edges"):
            text = (tmp_path / f"run_{part}.csv").read_text().splitlines()
            assert len(text) > 1 or part in ("nodes", "edges")
