"""Shared fixtures: the expensive case studies run once per session."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdflow.harness import run_case, solve_case_mesh
from mdflow.model import case1, case2
from mdflow.solver import SolverConfig


@pytest.fixture(scope="session")
def case1a_result():
    return run_case(case1("A"), (16, 32, 64, 128))


@pytest.fixture(scope="session")
def case1b_result():
    return run_case(case1("B"), (16, 32, 64, 128))


@pytest.fixture(scope="session")
def case2_result():
    return run_case(case2(), (8, 16, 32))


@pytest.fixture(scope="session")
def case1a_solver_sweep():
    """Per-mesh solve reports at the benchmark tolerance of 1e-6."""
    spec = case1("A")
    reports = {}
    for m in (16, 32, 64, 128, 256):
        _, _, report, _ = solve_case_mesh(spec, m, SolverConfig(tol=1e-6))
        reports[m] = report
    return reports
