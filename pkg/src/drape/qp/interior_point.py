"""Primal-dual interior-point baseline.

Mehrotra predictor-corrector on the slack form ``J_H dx + H - s = 0``,
``s >= 0``. Each iteration factors one sparse, quasi-definite KKT matrix
and reuses it for the predictor and the corrector.
"""
from __future__ import annotations

import time
from logging import getLogger
from typing import Iterable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..exceptions import ConvergenceError, LinearDependenceError
from ..signals import qp_solved
from ..typing import FloatArray, IndexArray
from .cholesky import DependentRowError, factor_equalities
from .problem import QpProblem, QpSolution, SolveStats

log = getLogger(__name__)

#: Quasi-definite regularization of the equality block.
KKT_REGULARIZATION = 1e-12
_STEP_FRACTION = 0.995


def _step_length(values: FloatArray, direction: FloatArray) -> float:
    negative = direction < 0.0
    if not np.any(negative):
        return 1.0
    return float(min(1.0, np.min(-values[negative] / direction[negative])))


class InteriorPointSolver:
    """Solves :class:`QpProblem` instances by path following.

    Arguments:
        tolerance: Bound on the scaled residuals and the complementarity
            gap at convergence.
        max_iterations: Cap after which :class:`ConvergenceError` is raised.
    """

    name = "interior-point"

    def __init__(self, tolerance: float = 1e-12, max_iterations: int = 200) -> None:
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def solve(
        self,
        problem: QpProblem,
        warm_working: Optional[Iterable[int]] = None,
        ordering: Optional[IndexArray] = None,
    ) -> QpSolution:
        # Warm working sets and orderings are active-set notions and are ignored.
        started = time.perf_counter()
        stats = SolveStats(self.name)
        n, p, m = problem.n_variables, problem.n_equalities, problem.n_inequalities
        mass, force = problem.mass, problem.force
        eq_jacobian, ineq_jacobian = problem.eq_jacobian, problem.ineq_jacobian
        scale = 1.0 + float(np.abs(force).max(initial=0.0))

        step, eq_multipliers = self._initial_point(problem)
        slack = ineq_jacobian @ step + problem.ineq_values
        shift = max(-1.5 * float(slack.min(initial=0.0)), 0.0)
        slack = slack + shift + 1e-2 * (1.0 + float(np.abs(slack).max(initial=0.0)))
        multipliers = np.ones(m)

        for iteration in range(self.max_iterations):
            stats.iterations = iteration + 1
            dual = (
                mass * step - force + eq_jacobian.T @ eq_multipliers - ineq_jacobian.T @ multipliers
            )
            primal_eq = eq_jacobian @ step + problem.eq_values
            primal_ineq = ineq_jacobian @ step + problem.ineq_values - slack
            gap = float(slack @ multipliers) / m if m else 0.0

            if not (np.all(np.isfinite(step)) and np.isfinite(gap)):
                raise ConvergenceError("Interior-point iterates diverged")
            if (
                np.abs(dual).max(initial=0.0) <= self.tolerance * scale
                and np.abs(primal_eq).max(initial=0.0) <= self.tolerance
                and np.abs(primal_ineq).max(initial=0.0) <= self.tolerance
                and gap <= self.tolerance
            ):
                return self._finish(
                    problem, step, eq_multipliers, multipliers, slack, stats, started
                )

            weights = multipliers / slack
            hessian = sp.diags(mass) + ineq_jacobian.T @ sp.diags(weights) @ ineq_jacobian
            kkt = sp.bmat(
                [
                    [hessian, eq_jacobian.T],
                    [eq_jacobian, -KKT_REGULARIZATION * scale * sp.identity(p)],
                ],
                format="csc",
            )
            try:
                lu = splu(kkt)
            except RuntimeError as error:
                raise ConvergenceError(f"Singular interior-point system: {error}") from error

            def direction(complementarity: FloatArray) -> Tuple[FloatArray, ...]:
                rhs = np.concatenate(
                    [
                        -dual
                        - ineq_jacobian.T @ (complementarity / slack + weights * primal_ineq),
                        -primal_eq,
                    ]
                )
                solution = lu.solve(rhs)
                d_step = solution[:n]
                d_eq = solution[n:]
                d_multipliers = -(complementarity / slack) - weights * (
                    ineq_jacobian @ d_step + primal_ineq
                )
                d_slack = ineq_jacobian @ d_step + primal_ineq
                return d_step, d_eq, d_multipliers, d_slack

            affine = direction(slack * multipliers)
            if m:
                alpha = min(
                    _step_length(slack, affine[3]), _step_length(multipliers, affine[2])
                )
                gap_affine = float(
                    (slack + alpha * affine[3]) @ (multipliers + alpha * affine[2])
                ) / m
                sigma = (gap_affine / gap) ** 3 if gap > 0 else 0.0
                corrected = direction(
                    slack * multipliers + affine[3] * affine[2] - sigma * gap
                )
                alpha = _STEP_FRACTION * min(
                    _step_length(slack, corrected[3]), _step_length(multipliers, corrected[2])
                )
                alpha = min(alpha, 1.0)
            else:
                corrected, alpha = affine, 1.0

            d_step, d_eq, d_multipliers, d_slack = corrected
            step = step + alpha * d_step
            eq_multipliers = eq_multipliers + alpha * d_eq
            multipliers = multipliers + alpha * d_multipliers
            slack = slack + alpha * d_slack

        raise ConvergenceError(
            f"Interior-point solve did not converge in {self.max_iterations} iterations"
        )

    def _initial_point(self, problem: QpProblem) -> Tuple[FloatArray, FloatArray]:
        """Minimizer of the objective subject to the equality rows only.

        Raises:
            LinearDependenceError: If the equality rows are dependent.
        """
        n, p = problem.n_variables, problem.n_equalities
        if p == 0:
            return problem.inverse_mass * problem.force, np.zeros(0)
        reduced = problem.eq_jacobian @ sp.diags(problem.inverse_mass) @ problem.eq_jacobian.T
        try:
            factor_equalities(reduced)
        except DependentRowError as error:
            key = problem.eq_keys[error.row] if error.row is not None else None
            raise LinearDependenceError(
                f"Equality row {key!r} is linearly dependent", key
            ) from error
        kkt = sp.bmat(
            [
                [sp.diags(problem.mass), problem.eq_jacobian.T],
                [problem.eq_jacobian, -KKT_REGULARIZATION * sp.identity(p)],
            ],
            format="csc",
        )
        try:
            solution = splu(kkt).solve(np.concatenate([problem.force, -problem.eq_values]))
        except RuntimeError as error:
            raise ConvergenceError(f"Singular equality system: {error}") from error
        return solution[:n], solution[n:]

    def _finish(
        self,
        problem: QpProblem,
        step: FloatArray,
        eq_multipliers: FloatArray,
        multipliers: FloatArray,
        slack: FloatArray,
        stats: SolveStats,
        started: float,
    ) -> QpSolution:
        # multipliers times the diagonal of J M^-1 J^T are lengths, like the slacks
        jacobian = problem.ineq_jacobian
        reach = multipliers * (jacobian.multiply(jacobian) @ problem.inverse_mass)
        active = tuple(int(row) for row in np.flatnonzero(reach > slack))
        solution = QpSolution(step, eq_multipliers, multipliers, active, stats)
        stats.working_size = len(active)
        stats.stationarity, stats.feasibility, _ = solution.kkt_residuals(problem)
        stats.wall_time = time.perf_counter() - started
        qp_solved.send(self, stats=stats)
        return solution


def interior_point_solve(problem: QpProblem, **options: float) -> QpSolution:
    """Solve *problem* with a fresh :class:`InteriorPointSolver`."""
    return InteriorPointSolver(**options).solve(problem)  # type: ignore[arg-type]
