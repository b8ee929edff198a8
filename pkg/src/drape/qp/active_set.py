"""Infeasible-start active-set solver.

The iteration starts from the unconstrained minimizer of the working
system, whatever its feasibility, and exchanges one inequality row per
iteration: the working row with the most negative multiplier leaves,
otherwise the most violated observed row enters. Rows that would make
the reduced system singular are swapped against the working row that
carries the largest share of the dependence.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from logging import getLogger
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..exceptions import CyclingError, IterationLimitError, LinearDependenceError
from ..signals import qp_solved
from ..typing import FloatArray, IndexArray
from .cholesky import BorderedFactor, DependentRowError
from .problem import QpProblem, QpSolution, SolveStats

log = getLogger(__name__)

#: A working set seen this many times aborts the solve.
CYCLE_LIMIT = 3


@dataclass
class ActiveSetState:
    """Working set, its factor and the current iterate."""

    factor: BorderedFactor
    n_inequalities: int
    step: Optional[FloatArray] = None
    eq_multipliers: Optional[FloatArray] = None
    working_multipliers: Optional[FloatArray] = None
    history: List[Tuple[int, ...]] = field(default_factory=list)

    @property
    def working(self) -> List[int]:
        return self.factor.rows

    @property
    def observed(self) -> List[int]:
        working = set(self.factor.rows)
        return [row for row in range(self.n_inequalities) if row not in working]

    @property
    def signature(self) -> Tuple[int, ...]:
        return tuple(sorted(self.factor.rows))

    def ineq_multipliers(self) -> FloatArray:
        multipliers = np.zeros(self.n_inequalities)
        if self.working_multipliers is not None and self.working:
            multipliers[self.working] = self.working_multipliers
        return multipliers


def equality_factor(problem: QpProblem, ordering: Optional[IndexArray] = None) -> BorderedFactor:
    """Factor the equality block of *problem* with no working rows.

    Raises:
        LinearDependenceError: Carrying the key of a dependent equality row.
    """
    try:
        return BorderedFactor(
            problem.inverse_mass, problem.eq_jacobian, problem.ineq_jacobian, ordering
        )
    except DependentRowError as error:
        key = problem.eq_keys[error.row] if error.row is not None else None
        raise LinearDependenceError(f"Equality row {key!r} is linearly dependent", key) from error


def solve_equality_system(
    problem: QpProblem,
    working: Iterable[int] = (),
    factor: Optional[BorderedFactor] = None,
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Minimize the objective with the equality and *working* rows held as equalities.

    Returns the step, the equality multipliers and the multipliers of
    the working rows in working-set order.

    Raises:
        LinearDependenceError: If an equality row, or a working row, is
            linearly dependent on the rows factored before it.
    """
    if factor is None:
        factor = equality_factor(problem)
        for row in working:
            try:
                factor.add(row)
            except DependentRowError as error:
                raise LinearDependenceError(
                    f"Working row {problem.ineq_keys[row]!r} is linearly dependent",
                    problem.ineq_keys[row],
                ) from error

    rows = factor.rows
    inverse_mass = problem.inverse_mass
    free = inverse_mass * problem.force
    working_jacobian = problem.ineq_jacobian[rows]
    rhs_eq = problem.eq_values + problem.eq_jacobian @ free
    rhs_ineq = problem.ineq_values[rows] + working_jacobian @ free
    eq_part, ineq_part = factor.solve(rhs_eq, rhs_ineq)

    # The solution of the reduced system stacks lambda and -gamma.
    eq_multipliers = eq_part
    working_multipliers = -ineq_part
    reaction = problem.eq_jacobian.T @ eq_multipliers - working_jacobian.T @ working_multipliers
    step = inverse_mass * (problem.force - reaction)
    return step, eq_multipliers, working_multipliers


class ActiveSetSolver:
    """Solves :class:`QpProblem` instances with the working-set exchange.

    Arguments:
        feasibility_tolerance: Observed rows with a linearized value
            above minus this are considered satisfied.
        multiplier_tolerance: Relative size below which a negative
            multiplier is treated as zero.
        max_iterations: Override of the ``50 + 10 m`` exchange cap.
    """

    name = "active-set"

    def __init__(
        self,
        feasibility_tolerance: float = 1e-10,
        multiplier_tolerance: float = 1e-12,
        max_iterations: Optional[int] = None,
    ) -> None:
        self.feasibility_tolerance = feasibility_tolerance
        self.multiplier_tolerance = multiplier_tolerance
        self.max_iterations = max_iterations

    def iteration_cap(self, problem: QpProblem) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return 50 + 10 * problem.n_inequalities

    def solve(
        self,
        problem: QpProblem,
        warm_working: Optional[Iterable[int]] = None,
        ordering: Optional[IndexArray] = None,
    ) -> QpSolution:
        started = time.perf_counter()
        stats = SolveStats(self.name)
        state = ActiveSetState(
            equality_factor(problem, ordering),
            problem.n_inequalities,
        )
        for row in sorted(set(warm_working or ())):
            if not 0 <= row < problem.n_inequalities:
                continue
            try:
                state.factor.add(row)
            except DependentRowError:
                log.debug("warm row %r is dependent, left observed", problem.ineq_keys[row])

        visits: Dict[Tuple[int, ...], int] = {}
        smallest_index = False
        for iteration in range(self.iteration_cap(problem) + 1):
            stats.iterations = iteration + 1
            step, eq_multipliers, working_multipliers = solve_equality_system(
                problem, factor=state.factor
            )
            state.step = step
            state.eq_multipliers = eq_multipliers
            state.working_multipliers = working_multipliers

            signature = state.signature
            visits[signature] = visits.get(signature, 0) + 1
            state.history.append(signature)
            if visits[signature] >= CYCLE_LIMIT:
                raise CyclingError(
                    f"Working set of size {len(signature)} revisited {visits[signature]} times",
                    state.history[-20:],
                )
            if visits[signature] == 2 and not smallest_index:
                log.debug("working set revisited, switching to smallest-index exchanges")
                smallest_index = True

            leaving = self._leaving_row(state, smallest_index)
            if leaving is not None:
                state.factor.remove(leaving)
                stats.exchanges += 1
                continue

            entering = self._entering_row(problem, state, smallest_index)
            if entering is None:
                return self._finish(problem, state, stats, started)

            try:
                state.factor.add(entering)
            except DependentRowError as error:
                self._swap(problem, state, entering, error)
                stats.swaps += 1
            stats.exchanges += 1

        raise IterationLimitError(
            f"Active-set solve exceeded {self.iteration_cap(problem)} exchanges "
            f"with {problem.n_inequalities} inequality rows"
        )

    def _leaving_row(self, state: ActiveSetState, smallest_index: bool) -> Optional[int]:
        multipliers = state.working_multipliers
        if multipliers is None or multipliers.size == 0:
            return None
        threshold = -self.multiplier_tolerance * max(1.0, float(np.abs(multipliers).max()))
        candidates = [
            (value, row) for row, value in zip(state.working, multipliers) if value < threshold
        ]
        if not candidates:
            return None
        if smallest_index:
            return min(row for _, row in candidates)
        # most negative, lowest row index on ties
        return min(candidates)[1]

    def _entering_row(
        self, problem: QpProblem, state: ActiveSetState, smallest_index: bool
    ) -> Optional[int]:
        observed = np.asarray(state.observed, dtype=np.int64)
        if observed.size == 0:
            return None
        values = problem.ineq_values[observed] + problem.ineq_jacobian[observed] @ state.step
        violated = values < -self.feasibility_tolerance
        if not np.any(violated):
            return None
        if smallest_index:
            return int(observed[violated].min())
        # argmin returns the first, so the lowest index, of equal values
        return int(observed[int(np.argmin(values))])

    def _swap(
        self, problem: QpProblem, state: ActiveSetState, entering: int, error: DependentRowError
    ) -> None:
        """Make room for a dependent *entering* row by removing one working row."""
        coefficients = {row: value for row, value in error.coefficients.items() if value > 0.0}
        if not coefficients:
            coefficients = {
                row: abs(value) for row, value in error.coefficients.items() if value != 0.0
            }
        if not coefficients:
            raise LinearDependenceError(
                f"Row {problem.ineq_keys[entering]!r} depends on the equality rows only",
                problem.ineq_keys[entering],
            ) from error
        largest = max(coefficients.values())
        leaving = min(row for row, value in coefficients.items() if value == largest)
        log.debug(
            "dependent row %r replaces %r",
            problem.ineq_keys[entering],
            problem.ineq_keys[leaving],
        )
        state.factor.remove(leaving)
        try:
            state.factor.add(entering)
        except DependentRowError as second:
            raise LinearDependenceError(
                f"Row {problem.ineq_keys[entering]!r} stays dependent after an exchange",
                problem.ineq_keys[entering],
            ) from second

    def _finish(
        self, problem: QpProblem, state: ActiveSetState, stats: SolveStats, started: float
    ) -> QpSolution:
        solution = QpSolution(
            state.step,
            state.eq_multipliers,
            state.ineq_multipliers(),
            tuple(sorted(state.working)),
            stats,
        )
        stats.factor_updates = state.factor.updates
        stats.working_size = len(state.working)
        stats.stationarity, stats.feasibility, _ = solution.kkt_residuals(problem)
        stats.wall_time = time.perf_counter() - started
        qp_solved.send(self, stats=stats)
        return solution


def active_set_solve(
    problem: QpProblem, warm_working: Optional[Iterable[int]] = None, **options: float
) -> QpSolution:
    """Solve *problem* with a fresh :class:`ActiveSetSolver`."""
    return ActiveSetSolver(**options).solve(problem, warm_working)  # type: ignore[arg-type]
