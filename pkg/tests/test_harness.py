"""Error norms, restriction operators, convergence tables, and CSV output."""

import numpy as np
import pytest

from mdflow.assembly import assemble_blocks, recover_fluxes, schur_tpfa
from mdflow.harness import (
    ConvergenceTable,
    ErrorRecord,
    FineReference,
    SeriesReference,
    emit_tables,
    error_norms,
    project_series_reference,
    restrict_cellwise,
    restrict_face_flux,
    run_case,
    transfer_density,
)
from mdflow.model import case1, case2
from mdflow.reference import solve_constants


class TestSeriesProjection:
    def test_projected_state_scores_zero_on_dof_norms(self, case1a_result):
        # the projected reference is its own reference for everything
        # sampled at the discrete unknowns
        spec = case1("A")
        grid = spec.grid(16)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        sol = solve_constants(spec.reference[1])
        ref = SeriesReference(sol, (0.0, 0.0))
        proj = project_series_reference(ref, blocks)
        rec = error_norms(proj, blocks, ref, 16)
        assert rec.pD == 0.0
        assert rec.pN == 0.0
        assert rec.qS == 0.0
        assert rec.qN == 0.0
        # the flux field error measures the per-face-constant
        # reconstruction against the exact field, so it is the (nonzero)
        # interpolation residual even for the projected state
        assert 0 < rec.qD < 1e-3


class TestFineRestriction:
    def setup_pair(self, fine=8, coarse=4):
        spec = case2(reference_resolution=fine)
        fg = spec.grid(fine)
        cg = spec.grid(coarse)
        f_coeffs = spec.coefficients(fg)
        c_coeffs = spec.coefficients(cg)
        fb = assemble_blocks(fg, spec.forest, f_coeffs)
        cb = assemble_blocks(cg, spec.forest, c_coeffs)
        return spec, fb, cb

    def test_cell_restriction_is_conservative(self):
        _, fb, cb = self.setup_pair()
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(fb.grid.n_cells)
        coarse = restrict_cellwise(fb.grid, cb.grid, vals)
        assert coarse.sum() * cb.grid.cell_volume == pytest.approx(
            vals.sum() * fb.grid.cell_volume, rel=1e-13
        )

    def test_face_restriction_sums_fluxes(self):
        _, fb, cb = self.setup_pair()
        rng = np.random.default_rng(1)
        q = rng.standard_normal(fb.grid.n_faces)
        qc = restrict_face_flux(fb.grid, cb.grid, q)
        assert qc.shape == (cb.grid.n_faces,)
        # a constant unit flux through every fine face of one axis sums
        # to the number of fine faces per coarse face
        q1 = np.where(fb.grid.face_axis == 0, 1.0, 0.0)
        qc1 = restrict_face_flux(fb.grid, cb.grid, q1)
        on_axis = cb.grid.face_axis == 0
        assert np.allclose(qc1[on_axis], 4.0)  # 2x2 spatial x 1 compartment
        assert np.allclose(qc1[~on_axis], 0.0)

    def test_transfer_density_conservative(self):
        _, fb, cb = self.setup_pair()
        rng = np.random.default_rng(2)
        state = recover_fluxes(fb, rng.standard_normal(fb.n_unknowns))
        dens = transfer_density(fb, state)
        coarse = restrict_cellwise(fb.grid, cb.grid, dens)
        assert coarse.sum() * cb.grid.cell_volume == pytest.approx(
            dens.sum() * fb.grid.cell_volume, rel=1e-12
        )

    def test_state_equals_reference_gives_zero_errors(self):
        # restriction of a solve against itself (ratio 1) vanishes
        spec = case2(reference_resolution=4)
        grid = spec.grid(4)
        blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
        A, b = schur_tpfa(blocks)
        x = np.linalg.solve(A.toarray(), b)
        state = recover_fluxes(blocks, x)
        ref = FineReference(blocks, state, None)
        rec = error_norms(state, blocks, ref, 4)
        for var in ("pD", "pN", "qD", "qS", "qN", "qP"):
            assert rec.get(var) == 0.0

    def test_non_nesting_grids_rejected(self):
        spec = case2(reference_resolution=8)
        with pytest.raises(ValueError, match="nest"):
            run_case(spec, [3, 6])


class TestConvergenceTable:
    def test_rates_and_average(self):
        records = [
            ErrorRecord(16, 1.0, 1.0, 1.0, 1.0, 1.0),
            ErrorRecord(32, 0.25, 0.5, 0.25, 0.125, 0.5),
        ]
        t = ConvergenceTable(records)
        assert t.rates("pD") == [pytest.approx(2.0)]
        assert t.rates("qS") == [pytest.approx(3.0)]
        assert t.average_rate("qD") == pytest.approx(2.0)

    def test_zero_errors_give_no_rate(self):
        records = [
            ErrorRecord(16, 1.0, 0.0, 1.0, 1.0, 1.0),
            ErrorRecord(32, 0.5, 0.0, 0.5, 0.5, 0.5),
        ]
        assert ConvergenceTable(records).rates("pN") == [None]

    def test_mesh_sequence_must_double(self):
        with pytest.raises(ValueError, match="double"):
            run_case(case1("A"), [16, 48])


class TestCase1Properties:
    def test_error_monotonicity(self, case1a_result):
        t = case1a_result.table
        for var in ("pD", "pN", "qD", "qS", "qN"):
            errs = t.errors(var)
            assert all(a > b for a, b in zip(errs, errs[1:])), var

    def test_superconvergence_presence(self, case1a_result):
        # second-order cell pressures from a first-order flux scheme
        t = case1a_result.table
        assert t.average_rate("pD") > 1.7
        assert 0.8 < t.average_rate("qD") < 1.3

    def test_network_variables_track_quadrature(self, case1a_result):
        t = case1a_result.table
        assert t.average_rate("pN") >= 3.0
        assert t.average_rate("qN") >= 3.0

    def test_case1b_matches_case1a_bands(self, case1b_result):
        t = case1b_result.table
        assert 1.77 <= t.average_rate("pD") <= 2.27
        assert 0.85 <= t.average_rate("qD") <= 1.15

    def test_conservation_checks_recorded(self, case1a_result):
        for check in case1a_result.checks:
            assert check.local_cells <= 10 * 1e-10 * check.rhs_l2

    def test_case2_solver_complexities_bounded(self, case2_result):
        reports = list(case2_result.reports) + [case2_result.reference_report]
        for rep in reports:
            assert rep.grid_complexity <= 2.2
            assert rep.operator_complexity <= 2.2


class TestEmitTables:
    def test_case1_header_and_shape(self, tmp_path, case1a_result):
        paths = emit_tables(case1a_result, tmp_path)
        lines = open(paths[0]).read().splitlines()
        assert lines[0] == "variable,inv_h,errD,rateD,errS,rateS,errN,rateN"
        # 4 meshes + average, twice (p rows then q rows)
        assert len(lines) == 1 + 2 * 5
        assert lines[1].startswith("p,16,")
        assert lines[5].split(",")[1] == "average"
        solver_lines = open(paths[1]).read().splitlines()
        assert solver_lines[0] == (
            "inv_h,nlevel,grid_comp,oper_comp,niter,cpu_setup,cpu_solve,dof"
        )
        assert len(solver_lines) == 5

    def test_case2_header_includes_transfer_and_perfusion(self, tmp_path, case2_result):
        paths = emit_tables(case2_result, tmp_path, no_timings=True)
        lines = open(paths[0]).read().splitlines()
        assert lines[0] == (
            "variable,inv_h,errD,rateD,errT,rateT,errN,rateN,errP,rateP"
        )
        # solver table includes the fine reference row
        solver_lines = open(paths[1]).read().splitlines()
        assert solver_lines[-1].startswith("64,")

    def test_empty_results_header_only(self, tmp_path):
        from mdflow.harness import CaseResult

        result = CaseResult(
            spec=case1("A"),
            meshes=(),
            table=ConvergenceTable([]),
            reports=[],
            checks=[],
        )
        paths = emit_tables(result, tmp_path)
        for p in paths:
            lines = open(p).read().splitlines()
            assert len(lines) >= 1 and lines[0].startswith(("variable", "inv_h"))
