from __future__ import annotations

from typing import Dict, Type, Union

from ..exceptions import ConfigurationError
from .active_set import (
    active_set_solve,
    ActiveSetSolver,
    ActiveSetState,
    equality_factor,
    solve_equality_system,
)
from .cholesky import (
    BorderedFactor,
    cholesky_add_row,
    cholesky_remove_row,
    cholesky_update,
    DependentRowError,
    factor_equalities,
    fill_reducing_ordering,
    independent_rows,
)
from .interior_point import interior_point_solve, InteriorPointSolver
from .problem import QpProblem, QpSolution, SolveStats

Solver = Union[ActiveSetSolver, InteriorPointSolver]

SOLVERS: Dict[str, Type] = {
    ActiveSetSolver.name: ActiveSetSolver,
    InteriorPointSolver.name: InteriorPointSolver,
}


def make_solver(name: str) -> Solver:
    try:
        return SOLVERS[name]()
    except KeyError:
        raise ConfigurationError(
            f"Unknown solver {name!r}, expected one of {', '.join(sorted(SOLVERS))}"
        ) from None


__all__ = (
    "active_set_solve",
    "ActiveSetSolver",
    "ActiveSetState",
    "BorderedFactor",
    "equality_factor",
    "cholesky_add_row",
    "cholesky_remove_row",
    "cholesky_update",
    "DependentRowError",
    "factor_equalities",
    "fill_reducing_ordering",
    "independent_rows",
    "interior_point_solve",
    "InteriorPointSolver",
    "make_solver",
    "QpProblem",
    "QpSolution",
    "SolveStats",
    "Solver",
    "SOLVERS",
    "solve_equality_system",
)
