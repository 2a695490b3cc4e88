"""Aggregation-based algebraic multigrid and a flexible GMRES driver.

The pressure systems are Poisson-like (a cell Laplacian coupled to a
graph Laplacian), so one V(1,1)-cycle of unsmoothed aggregation AMG
with a single Gauss-Seidel sweep for pre- and post-smoothing makes an
effective preconditioner.  Coarse spaces are piecewise constant over
aggregates built by greedy pairwise matching on the strength graph
(|a_ij| >= theta sqrt(a_ii a_jj)), two passes per level so aggregates
reach size ~4; leftovers join their strongest aggregated neighbor.
Everything is deterministic: aggregation seeds scan unknowns in their
natural (lexicographic) order and Gauss-Seidel sweeps forward in that
order before correction and backward after it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class AggregationStallError(RuntimeError):
    """Coarsening made essentially no progress on two consecutive levels."""


@dataclass
class AmgConfig:
    theta: float = 0.08
    coarse_size: int = 32
    max_levels: int = 30
    npasses: int = 2  # pairwise matching passes per level


@dataclass
class SolverConfig:
    tol: float = 1e-6
    maxit: int = 500
    amg: AmgConfig = field(default_factory=AmgConfig)


class _Level:
    """One multigrid level: operator, smoother factors, optional transfer."""

    def __init__(self, A: sp.csr_matrix):
        self.A = A
        self.P = None  # prolongation from the next-coarser level
        self.aggregates = None  # fine index -> coarse index
        d = A.diagonal()
        if np.any(d <= 0):
            raise ValueError("zero diagonal entry: Gauss-Seidel is undefined")
        self._lower = spla.splu(
            sp.tril(A, 0).tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0
        )
        self._upper = spla.splu(
            sp.triu(A, 0).tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0
        )
        self._dense = None  # (eigvals, eigvecs) kernel-aware coarse factorization

    def gs_forward(self, b, x):
        return x + self._lower.solve(b - self.A @ x)

    def gs_backward(self, b, x):
        return x + self._upper.solve(b - self.A @ x)

    def factor_dense(self):
        lam, V = np.linalg.eigh(self.A.toarray())
        self._dense = (lam, V)

    def coarse_solve(self, b):
        lam, V = self._dense
        cutoff = 1e-12 * max(lam.max(), 1.0)
        inv = np.where(lam > cutoff, 1.0 / np.where(lam > cutoff, lam, 1.0), 0.0)
        return V @ (inv * (V.T @ b))


@dataclass
class AmgHierarchy:
    levels: list
    nlevels: int
    grid_complexity: float
    operator_complexity: float

    @property
    def shape(self):
        return self.levels[0].A.shape


def _strength_graph(A: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    """Off-diagonal entries passing |a_ij| >= theta sqrt(a_ii a_jj), as |a_ij|."""
    coo = A.tocoo()
    d = np.abs(A.diagonal())
    off = coo.row != coo.col
    mag = np.abs(coo.data)
    strong = off & (mag > 0) & (mag >= theta * np.sqrt(d[coo.row] * d[coo.col]))
    S = sp.csr_matrix(
        (mag[strong], (coo.row[strong], coo.col[strong])), shape=A.shape
    )
    S.sort_indices()
    return S


def _match_pass(S: sp.csr_matrix):
    """One greedy pairwise matching sweep in natural order.

    Returns the fine-to-coarse map, or None if nothing aggregated.
    Unmatched nodes with an aggregated strong neighbor join the
    strongest such aggregate; isolated nodes stay singletons.
    """
    n = S.shape[0]
    indptr, indices, data = S.indptr, S.indices, S.data
    agg = np.full(n, -1, dtype=np.int64)
    n_agg = 0
    paired = False
    for i in range(n):
        if agg[i] >= 0:
            continue
        best = -1
        best_w = 0.0
        for pos in range(indptr[i], indptr[i + 1]):
            j = indices[pos]
            if agg[j] < 0:
                w = data[pos]
                if w > best_w:
                    best_w = w
                    best = j
        if best >= 0:
            agg[i] = agg[best] = n_agg
            n_agg += 1
            paired = True
    for i in range(n):
        if agg[i] >= 0:
            continue
        best = -1
        best_w = 0.0
        for pos in range(indptr[i], indptr[i + 1]):
            j = indices[pos]
            if agg[j] >= 0:
                w = data[pos]
                if w > best_w:
                    best_w = w
                    best = j
        if best >= 0:
            agg[i] = agg[best]
            paired = True
        else:
            agg[i] = n_agg
            n_agg += 1
    if not paired:
        return None
    return agg


def _piecewise_constant(agg: np.ndarray) -> sp.csr_matrix:
    n = agg.size
    nc = int(agg.max()) + 1
    return sp.csr_matrix(
        (np.ones(n), (np.arange(n), agg)), shape=(n, nc)
    )


def _aggregate(A: sp.csr_matrix, config: AmgConfig):
    """Compose pairwise passes into one level's aggregation map."""
    n = A.shape[0]
    agg = np.arange(n, dtype=np.int64)
    Ac = A
    progressed = False
    for _ in range(config.npasses):
        S = _strength_graph(Ac, config.theta)
        sub = _match_pass(S)
        if sub is None:
            break
        agg = sub[agg]
        P = _piecewise_constant(sub)
        Ac = (P.T @ (Ac @ P)).tocsr()
        progressed = True
        if Ac.shape[0] <= config.coarse_size:
            break
    return (agg if progressed else None)


def build_hierarchy(A, config: AmgConfig | None = None) -> AmgHierarchy:
    """Set up the unsmoothed-aggregation hierarchy for a symmetric operator.

    Coarsening stops at ``coarse_size`` unknowns (then solved by a dense
    kernel-aware eigendecomposition) or when aggregation stalls.  A
    one-level hierarchy degenerates to pre/post smoothing around the
    dense solve when the matrix is already small, and to the two
    smoothing sweeps alone when nothing aggregates (e.g. a diagonal
    matrix, for which Gauss-Seidel is exact anyway).
    """
    config = config or AmgConfig()
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"non-square input {A.shape}")
    levels = [_Level(A)]
    poor_streak = 0
    while (
        levels[-1].A.shape[0] > config.coarse_size
        and len(levels) < config.max_levels
    ):
        fine = levels[-1]
        n = fine.A.shape[0]
        agg = _aggregate(fine.A, config)
        if agg is None:
            break
        nc = int(agg.max()) + 1
        if nc == n:
            break
        if nc > 0.95 * n:
            poor_streak += 1
            if poor_streak >= 2:
                raise AggregationStallError(
                    f"aggregation reduced {n} to {nc} unknowns twice in a row"
                )
        else:
            poor_streak = 0
        P = _piecewise_constant(agg)
        Ac = (P.T @ (fine.A @ P)).tocsr()
        Ac.sort_indices()
        if np.any(Ac.diagonal() <= 0):
            break
        fine.P = P
        fine.aggregates = agg
        levels.append(_Level(Ac))
    if levels[-1].A.shape[0] <= config.coarse_size:
        levels[-1].factor_dense()

    n0 = levels[0].A.shape[0]
    nnz0 = levels[0].A.nnz
    return AmgHierarchy(
        levels=levels,
        nlevels=len(levels),
        grid_complexity=sum(l.A.shape[0] for l in levels) / n0,
        operator_complexity=sum(l.A.nnz for l in levels) / nnz0,
    )


def vcycle(hierarchy: AmgHierarchy, b: np.ndarray, x: np.ndarray | None = None):
    """One V(1,1) cycle: forward Gauss-Seidel down, backward up."""
    if x is None:
        x = np.zeros_like(b)
    return _cycle(hierarchy.levels, 0, b, x)


def _cycle(levels, l, b, x):
    lev = levels[l]
    if l == len(levels) - 1:
        if lev._dense is not None:
            if l == 0:
                # degenerate one-level form: smoothing around the direct solve
                x = lev.gs_forward(b, x)
                x = x + lev.coarse_solve(b - lev.A @ x)
                return lev.gs_backward(b, x)
            return lev.coarse_solve(b)
        x = lev.gs_forward(b, x)
        return lev.gs_backward(b, x)
    x = lev.gs_forward(b, x)
    r = b - lev.A @ x
    ec = _cycle(levels, l + 1, lev.P.T @ r, np.zeros(lev.P.shape[1]))
    x = x + lev.P @ ec
    return lev.gs_backward(b, x)


@dataclass
class SolveReport:
    """Iteration counts, residual history, hierarchy metrics, and timings."""

    iterations: int
    residuals: tuple  # relative residual history, starts at 1.0
    converged: bool
    tol: float
    true_residual: float
    dof: int
    nlevels: int = 1
    grid_complexity: float = 1.0
    operator_complexity: float = 1.0
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0
    breakdown: int | None = None

    CSV_HEADER = "inv_h,nlevel,grid_comp,oper_comp,niter,cpu_setup,cpu_solve,dof"

    def csv_row(self, inv_h, no_timings: bool = False) -> str:
        setup = 0.0 if no_timings else self.setup_seconds
        solve = 0.0 if no_timings else self.solve_seconds
        return (
            f"{inv_h},{self.nlevels},{self.grid_complexity:.6f},"
            f"{self.operator_complexity:.6f},{self.iterations},"
            f"{setup:.3e},{solve:.3e},{self.dof}"
        )


def fgmres(A, b, preconditioner=None, tol=1e-6, maxit=500, x0=None):
    """Flexible GMRES without restart.

    The preconditioner is a callable applied to each Arnoldi vector and
    may change between iterations.  Convergence means the l2 residual
    dropped below tol times the initial residual (x0 defaults to zero):
    once the Givens estimate crosses tol the true residual is verified
    explicitly, and iteration continues (up to a stagnation cutoff) if
    rounding has detached the estimate from it.  A zero Arnoldi norm is
    reported through the breakdown index; the happy variety coincides
    with the residual reaching (near) zero.
    Returns (x, iterations, relative residual history, breakdown index).
    """
    n = b.size
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    r0 = b - A @ x0
    beta = np.linalg.norm(r0)
    history = [1.0]
    if beta == 0.0:
        return x0, 0, history, None

    V = [r0 / beta]
    Z = []
    H = []  # rotated Hessenberg columns (upper triangular part)
    cs, sn = [], []
    g = [beta]
    breakdown = None

    def form_solution(m):
        y = np.zeros(m)
        for i in range(m - 1, -1, -1):
            y[i] = (g[i] - sum(H[k][i] * y[k] for k in range(i + 1, m))) / H[i][i]
        x = x0.copy()
        for yk, zk in zip(y, Z[:m]):
            x += yk * zk
        return x

    best = None  # (true relative residual, iterate) at verification points
    stalled = 0
    for j in range(maxit):
        z = preconditioner(V[j]) if preconditioner is not None else V[j].copy()
        Z.append(z)
        w = A @ z
        h = np.zeros(j + 2)
        for i in range(j + 1):
            h[i] = V[i] @ w
            w = w - h[i] * V[i]
        wnorm = float(np.linalg.norm(w))
        h[j + 1] = wnorm

        for i in range(j):  # stored Givens rotations
            t = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = t
        denom = np.hypot(h[j], h[j + 1])
        if denom == 0.0:
            # dead column: A maps the new direction into the span already
            # used; drop it and stop
            breakdown = j
            Z.pop()
            break
        c, s = h[j] / denom, h[j + 1] / denom
        cs.append(c)
        sn.append(s)
        g.append(-s * g[j])
        g[j] = c * g[j]
        h[j] = denom
        h[j + 1] = 0.0
        H.append(h)
        history.append(abs(g[j + 1]) / beta)
        if wnorm == 0.0:
            breakdown = j
            break
        if history[-1] <= tol:
            x_try = form_solution(len(H))
            true_rel = float(np.linalg.norm(b - A @ x_try)) / beta
            if best is None or true_rel < 0.5 * best[0]:
                best = (true_rel, x_try)
                stalled = 0
            else:
                stalled += 1
                if true_rel < best[0]:
                    best = (true_rel, x_try)
            if true_rel <= tol or stalled >= 3:
                return best[1], len(H), history, breakdown
        V.append(w / wnorm)

    m = len(H)
    if m == 0:
        return x0, 0, history, breakdown
    x = form_solution(m)
    if best is not None:
        true_rel = float(np.linalg.norm(b - A @ x)) / beta
        if best[0] < true_rel:
            x = best[1]
    return x, m, history, breakdown


def solve_pressure(A, b, config: SolverConfig | None = None, kernel=None):
    """AMG-preconditioned FGMRES solve of the pressure system.

    ``kernel`` is an orthonormal null-space basis for semidefinite
    (pure-Neumann) systems; the right-hand side must then be consistent
    (orthogonal to the kernel up to 1e-10 relative) and iterates are
    projected back to the complement each application, so the returned
    solution has zero kernel component.
    """
    config = config or SolverConfig()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    dof = b.size

    if kernel is not None and kernel.size:
        defect = np.linalg.norm(kernel.T @ b)
        if defect > 1e-10 * max(np.linalg.norm(b), 1e-300):
            raise ValueError(
                f"inconsistent singular system: kernel component {defect:.3e}"
            )
        b = b - kernel @ (kernel.T @ b)

    if not np.any(b):
        report = SolveReport(
            iterations=0,
            residuals=(1.0,),
            converged=True,
            tol=config.tol,
            true_residual=0.0,
            dof=dof,
        )
        return np.zeros(dof), report

    t0 = time.perf_counter()
    hierarchy = build_hierarchy(A, config.amg)
    t1 = time.perf_counter()

    def prec(v):
        z = vcycle(hierarchy, v)
        if kernel is not None and kernel.size:
            z = z - kernel @ (kernel.T @ z)
        return z

    x, iters, history, breakdown = fgmres(
        A, b, preconditioner=prec, tol=config.tol, maxit=config.maxit
    )
    if kernel is not None and kernel.size:
        x = x - kernel @ (kernel.T @ x)
    t2 = time.perf_counter()

    true_rel = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    report = SolveReport(
        iterations=iters,
        residuals=tuple(history),
        converged=bool(true_rel <= 10 * config.tol),
        tol=config.tol,
        true_residual=float(true_rel),
        dof=dof,
        nlevels=hierarchy.nlevels,
        grid_complexity=hierarchy.grid_complexity,
        operator_complexity=hierarchy.operator_complexity,
        setup_seconds=t1 - t0,
        solve_seconds=t2 - t1,
        breakdown=breakdown,
    )
    return x, report
