from __future__ import annotations

from itertools import combinations
from typing import List

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as strategies

from drape.exceptions import (
    ConfigurationError,
    IterationLimitError,
    LinearDependenceError,
)
from drape.qp import (
    active_set_solve,
    ActiveSetSolver,
    interior_point_solve,
    InteriorPointSolver,
    make_solver,
    QpProblem,
    solve_equality_system,
)
from drape.signals import qp_solved


@pytest.fixture(name="halfspace")
def _halfspace() -> QpProblem:
    return QpProblem.dense(
        np.ones(2), [-1.0, 2.0], ineq_jacobian=[[1.0, 0.0]], ineq_values=[0.0]
    )


def _random_problem(rng: np.random.Generator) -> QpProblem:
    n = int(rng.integers(16, 31))
    p = int(rng.integers(0, 6))
    m = int(rng.integers(0, 11))
    feasible = rng.normal(size=n)
    eq_jacobian = rng.normal(size=(p, n))
    ineq_jacobian = rng.normal(size=(m, n))
    return QpProblem.dense(
        rng.uniform(0.5, 2.0, size=n),
        rng.normal(scale=2.0, size=n),
        eq_jacobian,
        -eq_jacobian @ feasible,
        ineq_jacobian,
        -ineq_jacobian @ feasible + rng.uniform(0.0, 1.0, size=m),
    )


def _brute_force_objective(problem: QpProblem) -> float:
    """Best objective among the feasible equality solutions of every row subset."""
    best = np.inf
    rows = range(problem.n_inequalities)
    for size in range(problem.n_inequalities + 1):
        for subset in combinations(rows, size):
            step, _, _ = solve_equality_system(problem, subset)
            _, ineq = problem.linearized(step)
            if np.all(ineq >= -1e-9):
                best = min(best, problem.objective(step))
    return best


def test_halfspace(halfspace: QpProblem) -> None:
    solution = active_set_solve(halfspace)
    np.testing.assert_allclose(solution.step, [0.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(solution.ineq_multipliers, [1.0])
    assert solution.working_set == (0,)
    assert solution.active_keys(halfspace) == [0]
    assert solution.stats.solver == "active-set"
    assert solution.stats.exchanges == 1


def test_halfspace_interior_point(halfspace: QpProblem) -> None:
    solution = interior_point_solve(halfspace)
    np.testing.assert_allclose(solution.step, [0.0, 2.0], atol=1e-9)
    np.testing.assert_allclose(solution.ineq_multipliers, [1.0], atol=1e-9)
    assert solution.working_set == (0,)
    assert solution.stats.solver == "interior-point"


def test_inactive_constraint() -> None:
    problem = QpProblem.dense(np.ones(2), [1.0, 2.0], ineq_jacobian=[[1.0, 0.0]], ineq_values=[0.0])
    solution = active_set_solve(problem)
    np.testing.assert_allclose(solution.step, [1.0, 2.0])
    assert solution.working_set == ()
    np.testing.assert_allclose(solution.ineq_multipliers, [0.0])


def test_equality_system(halfspace: QpProblem) -> None:
    step, eq_multipliers, working = solve_equality_system(halfspace)
    np.testing.assert_allclose(step, [-1.0, 2.0])
    assert eq_multipliers.shape == (0,) and working.shape == (0,)
    step, _, working = solve_equality_system(halfspace, (0,))
    np.testing.assert_allclose(step, [0.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(working, [1.0])


def test_equality_multiplier_sign() -> None:
    problem = QpProblem.dense(np.ones(2), np.zeros(2), [[1.0, 1.0]], [-1.0])
    step, eq_multipliers, _ = solve_equality_system(problem)
    np.testing.assert_allclose(step, [0.5, 0.5])
    np.testing.assert_allclose(eq_multipliers, [-0.5])
    residual = problem.stationarity(step, eq_multipliers, np.zeros(0))
    np.testing.assert_allclose(residual, 0.0, atol=1e-12)


def test_dependent_working_rows() -> None:
    problem = QpProblem.dense(
        np.ones(2), np.zeros(2), ineq_jacobian=[[1.0, 2.0], [2.0, 4.0]], ineq_values=[0.0, 1.0]
    )
    with pytest.raises(LinearDependenceError) as error:
        solve_equality_system(problem, (0, 1))
    assert error.value.row == 1


def test_dependent_row_is_swapped() -> None:
    problem = QpProblem.dense(
        np.ones(2),
        [-1.0, -2.0],
        ineq_jacobian=[[1.0, 0.0], [0.0, 1.0], [0.1, 0.1]],
        ineq_values=[0.0, 0.0, -0.05],
    )
    solution = active_set_solve(problem)
    np.testing.assert_allclose(solution.step, [0.5, 0.0], atol=1e-12)
    np.testing.assert_allclose(solution.ineq_multipliers, [0.0, 0.5, 15.0], atol=1e-9)
    assert solution.working_set == (1, 2)
    assert solution.stats.swaps == 1


def test_contradictory_equalities_interior_point() -> None:
    problem = QpProblem.dense(np.ones(2), np.zeros(2), [[1.0, 0.0], [1.0, 0.0]], [0.0, -1.0])
    with pytest.raises(LinearDependenceError) as error:
        interior_point_solve(problem, max_iterations=50)
    assert error.value.row == 1


def test_duplicate_equalities() -> None:
    # x0 = 1 twice
    problem = QpProblem.dense(np.ones(2), np.zeros(2), [[1.0, 0.0], [1.0, 0.0]], [-1.0, -1.0])
    with pytest.raises(LinearDependenceError) as error:
        solve_equality_system(problem)
    assert error.value.row == 1
    with pytest.raises(LinearDependenceError):
        make_solver("active-set").solve(problem)


def test_contradictory_equalities() -> None:
    # x0 = 1 and x0 = 2 with an inactive bound on x1
    problem = QpProblem(
        np.ones(2),
        np.zeros(2),
        sp.csr_matrix([[1.0, 0.0], [1.0, 0.0]]),
        np.array([-1.0, -2.0]),
        sp.csr_matrix([[0.0, 1.0]]),
        np.array([1.0]),
        [("inext", 0), ("inext", 1)],
        [("floor", 0)],
    )
    with pytest.raises(LinearDependenceError) as error:
        make_solver("active-set").solve(problem)
    assert error.value.row == ("inext", 1)
    with pytest.raises(LinearDependenceError):
        make_solver("interior-point").solve(problem)


def test_nearly_dependent_equalities_are_solved() -> None:
    problem = QpProblem.dense(
        np.ones(2), np.zeros(2), [[1.0, 0.0], [1.0, 0.01]], [-1.0, -1.01]
    )
    step, _, _ = solve_equality_system(problem)
    np.testing.assert_allclose(step, [1.0, 1.0], rtol=1e-8)


def test_iteration_limit(halfspace: QpProblem) -> None:
    with pytest.raises(IterationLimitError):
        active_set_solve(halfspace, max_iterations=0)


def test_iteration_cap() -> None:
    problem = QpProblem.dense(
        np.ones(3), np.zeros(3), ineq_jacobian=np.eye(3), ineq_values=np.ones(3)
    )
    assert ActiveSetSolver().iteration_cap(problem) == 80
    assert ActiveSetSolver(max_iterations=4).iteration_cap(problem) == 4


def test_problem_validation() -> None:
    with pytest.raises(ValueError):
        QpProblem.dense(np.array([1.0, 0.0]), np.zeros(2))
    with pytest.raises(ValueError):
        QpProblem.dense(np.ones(2), np.zeros(3))
    with pytest.raises(ValueError):
        QpProblem(
            np.ones(2),
            np.zeros(2),
            sp.csr_matrix((1, 2)),
            np.zeros(2),
            sp.csr_matrix((0, 2)),
            np.zeros(0),
        )


def test_make_solver() -> None:
    assert isinstance(make_solver("active-set"), ActiveSetSolver)
    assert isinstance(make_solver("interior-point"), InteriorPointSolver)
    with pytest.raises(ConfigurationError):
        make_solver("simplex")


def test_qp_solved_signal(halfspace: QpProblem) -> None:
    received: List[str] = []

    def record(sender: object, stats: object) -> None:
        received.append(stats.solver)  # type: ignore[attr-defined]

    with qp_solved.connected_to(record):
        active_set_solve(halfspace)
        interior_point_solve(halfspace)
    assert received == ["active-set", "interior-point"]


def test_random_problems_match_brute_force(rng: np.random.Generator) -> None:
    for _ in range(100):
        problem = _random_problem(rng)
        solution = active_set_solve(problem)
        objective = problem.objective(solution.step)
        assert objective == pytest.approx(
            _brute_force_objective(problem), abs=1e-8 * max(1.0, abs(objective))
        )
        stationarity, infeasibility, dual = solution.kkt_residuals(problem)
        assert stationarity <= 1e-8 * (1.0 + np.abs(problem.force).max())
        assert infeasibility <= 1e-8
        assert dual <= 1e-10

        baseline = InteriorPointSolver(tolerance=1e-10).solve(problem)
        np.testing.assert_allclose(baseline.step, solution.step, atol=1e-6)


def test_warm_start_matches_cold_start(rng: np.random.Generator) -> None:
    for _ in range(20):
        problem = _random_problem(rng)
        cold = active_set_solve(problem)
        warm = active_set_solve(problem, cold.working_set)
        np.testing.assert_allclose(warm.step, cold.step, atol=1e-10)
        assert warm.working_set == cold.working_set
        assert warm.stats.exchanges == 0
        # a wrong guess still ends at the same optimum
        guess = [row for row in range(problem.n_inequalities) if row not in cold.working_set]
        guessed = active_set_solve(problem, guess[:3])
        np.testing.assert_allclose(guessed.step, cold.step, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=strategies.integers(min_value=0, max_value=2**32 - 1))
def test_working_multipliers_non_negative(seed: int) -> None:
    problem = _random_problem(np.random.default_rng(seed))
    solution = active_set_solve(problem)
    assert np.all(solution.ineq_multipliers >= -1e-10)
    observed = [row for row in range(problem.n_inequalities) if row not in solution.working_set]
    np.testing.assert_allclose(solution.ineq_multipliers[observed], 0.0)
    _, ineq = problem.linearized(solution.step)
    np.testing.assert_allclose(ineq[list(solution.working_set)], 0.0, atol=1e-9)
