"""Solver scaling: unsmoothed aggregation keeps coarse operators sparse.

Builds the pressure system at a few resolutions and reports the
multigrid hierarchy metrics plus preconditioned iteration counts.  Grid
and operator complexity stay bounded (the cost of one V-cycle is a
fixed multiple of a matrix pass) while iterations grow slowly, the
expected behavior of plain aggregation without K-cycles.
"""

from mdflow import assemble_blocks, case1, schur_tpfa, solve_pressure
from mdflow.solver import SolverConfig

spec = case1("A")
print(f"{'1/h':>5} {'dof':>7} {'levels':>6} {'grid':>6} {'oper':>6} "
      f"{'iters':>5} {'setup s':>8} {'solve s':>8}")
prev = None
for m in (16, 32, 64, 128, 256):
    grid = spec.grid(m)
    blocks = assemble_blocks(grid, spec.forest, spec.coefficients(grid))
    A, b = schur_tpfa(blocks)
    x, rep = solve_pressure(A, b, SolverConfig(tol=1e-6))
    growth = "" if prev is None else f"  (x{rep.iterations / prev:.2f})"
    print(f"{m:>5} {rep.dof:>7} {rep.nlevels:>6} {rep.grid_complexity:>6.2f} "
          f"{rep.operator_complexity:>6.2f} {rep.iterations:>5} "
          f"{rep.setup_seconds:>8.3f} {rep.solve_seconds:>8.3f}{growth}")
    prev = rep.iterations
