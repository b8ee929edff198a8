from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ..typing import FloatArray, RowKey


@dataclass
class QpProblem:
    """The quadratic program solved at every outer iteration.

    Minimizes ``1/2 dx^T M dx - f^T dx`` subject to ``C + J_C dx = 0``
    and ``H + J_H dx >= 0``. The mass matrix is diagonal and stored as
    the vector of its entries.

    Multipliers follow the sign convention
    ``M dx = f - J_C^T lambda + J_H^T gamma`` with ``gamma >= 0``.
    """

    mass: FloatArray
    force: FloatArray
    eq_jacobian: sp.csr_matrix
    eq_values: FloatArray
    ineq_jacobian: sp.csr_matrix
    ineq_values: FloatArray
    eq_keys: List[RowKey] = field(default_factory=list)
    ineq_keys: List[RowKey] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.mass = np.asarray(self.mass, dtype=float).reshape(-1)
        self.force = np.asarray(self.force, dtype=float).reshape(-1)
        self.eq_values = np.asarray(self.eq_values, dtype=float).reshape(-1)
        self.ineq_values = np.asarray(self.ineq_values, dtype=float).reshape(-1)
        self.eq_jacobian = sp.csr_matrix(self.eq_jacobian)
        self.ineq_jacobian = sp.csr_matrix(self.ineq_jacobian)
        n = self.mass.shape[0]
        if np.any(self.mass <= 0.0):
            raise ValueError("The mass matrix must have a positive diagonal")
        if self.force.shape[0] != n:
            raise ValueError("Force and mass sizes differ")
        if self.eq_jacobian.shape != (self.eq_values.shape[0], n):
            raise ValueError("Equality rows do not match their values")
        if self.ineq_jacobian.shape != (self.ineq_values.shape[0], n):
            raise ValueError("Inequality rows do not match their values")
        if not self.eq_keys:
            self.eq_keys = list(range(self.n_equalities))
        if not self.ineq_keys:
            self.ineq_keys = list(range(self.n_inequalities))

    @classmethod
    def dense(
        cls,
        mass: FloatArray,
        force: FloatArray,
        eq_jacobian: Optional[FloatArray] = None,
        eq_values: Optional[FloatArray] = None,
        ineq_jacobian: Optional[FloatArray] = None,
        ineq_values: Optional[FloatArray] = None,
    ) -> "QpProblem":
        """Build a problem from dense arrays, missing blocks are empty."""
        n = np.asarray(mass).reshape(-1).shape[0]
        if eq_jacobian is None:
            eq_jacobian, eq_values = np.zeros((0, n)), np.zeros(0)
        if ineq_jacobian is None:
            ineq_jacobian, ineq_values = np.zeros((0, n)), np.zeros(0)
        return cls(
            mass,
            force,
            sp.csr_matrix(np.atleast_2d(eq_jacobian).reshape(-1, n)),
            np.asarray(eq_values, dtype=float),
            sp.csr_matrix(np.atleast_2d(ineq_jacobian).reshape(-1, n)),
            np.asarray(ineq_values, dtype=float),
        )

    @property
    def n_variables(self) -> int:
        return int(self.mass.shape[0])

    @property
    def n_equalities(self) -> int:
        return int(self.eq_values.shape[0])

    @property
    def n_inequalities(self) -> int:
        return int(self.ineq_values.shape[0])

    @property
    def inverse_mass(self) -> FloatArray:
        return 1.0 / self.mass

    def objective(self, step: FloatArray) -> float:
        return float(0.5 * step @ (self.mass * step) - self.force @ step)

    def linearized(self, step: FloatArray) -> Tuple[FloatArray, FloatArray]:
        """Equality and inequality values after *step*."""
        return (
            self.eq_values + self.eq_jacobian @ step,
            self.ineq_values + self.ineq_jacobian @ step,
        )

    def stationarity(
        self, step: FloatArray, eq_multipliers: FloatArray, ineq_multipliers: FloatArray
    ) -> FloatArray:
        return (
            self.mass * step
            - self.force
            + self.eq_jacobian.T @ eq_multipliers
            - self.ineq_jacobian.T @ ineq_multipliers
        )


@dataclass
class SolveStats:
    solver: str
    iterations: int = 0
    exchanges: int = 0
    factor_updates: int = 0
    swaps: int = 0
    working_size: int = 0
    stationarity: float = 0.0
    feasibility: float = 0.0
    wall_time: float = 0.0


@dataclass
class QpSolution:
    step: FloatArray
    eq_multipliers: FloatArray
    ineq_multipliers: FloatArray
    working_set: Tuple[int, ...]
    stats: SolveStats

    def active_keys(self, problem: QpProblem) -> List[RowKey]:
        return [problem.ineq_keys[row] for row in self.working_set]

    def kkt_residuals(self, problem: QpProblem) -> Tuple[float, float, float]:
        """Stationarity, primal infeasibility and dual infeasibility."""
        eq, ineq = problem.linearized(self.step)
        stationarity = problem.stationarity(self.step, self.eq_multipliers, self.ineq_multipliers)
        return (
            float(np.abs(stationarity).max(initial=0.0)),
            float(max(np.abs(eq).max(initial=0.0), (-ineq).max(initial=0.0), 0.0)),
            float(max((-self.ineq_multipliers).max(initial=0.0), 0.0)),
        )
