"""Cholesky factors of the reduced system with row up- and downdates.

The reduced matrix is ``J M^-1 J^T`` for the equality rows followed by
the working inequality rows. The equality block is sparse and factored
once; inequality rows are bordered onto it through a dense Cholesky
factor of their Schur complement, so entering and leaving rows cost
``O(k^2)`` for ``k`` working rows.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve, qr, solve_triangular
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu, SuperLU

from ..typing import FloatArray, IndexArray

#: A bordered pivot squared below this fraction of its diagonal marks a dependent row.
DEPENDENCE_TOLERANCE = 1e-12
#: Squared residual below which a unit row counts as dependent when selecting rows.
SELECTION_TOLERANCE = 1e-8


class DependentRowError(ArithmeticError):
    """The row to add is (numerically) a combination of the factored rows."""

    def __init__(
        self,
        pivot: float,
        coefficients: Optional[Dict[int, float]] = None,
        row: Optional[int] = None,
    ) -> None:
        super().__init__(f"Non-positive pivot {pivot:.3e}")
        self.pivot = pivot
        self.coefficients = coefficients or {}
        self.row = row


def cholesky_add_row(
    lower: FloatArray,
    border: FloatArray,
    diagonal: float,
    tolerance: float = DEPENDENCE_TOLERANCE,
    scale: Optional[float] = None,
) -> FloatArray:
    """Factor of ``[[A, b], [b^T, d]]`` from the lower factor of ``A``.

    Raises:
        DependentRowError: When the new pivot squared is below
            ``tolerance * scale``, the scale defaulting to ``d``.
    """
    size = lower.shape[0]
    column = solve_triangular(lower, border, lower=True) if size else np.zeros(0)
    pivot = float(diagonal - column @ column)
    if diagonal <= 0.0 or pivot <= tolerance * (diagonal if scale is None else scale):
        raise DependentRowError(pivot)
    result = np.zeros((size + 1, size + 1))
    result[:size, :size] = lower
    result[size, :size] = column
    result[size, size] = np.sqrt(pivot)
    return result


def cholesky_update(lower: FloatArray, vector: FloatArray) -> FloatArray:
    """Factor of ``L L^T + v v^T`` through a sweep of Givens rotations."""
    lower = np.array(lower, dtype=float)
    vector = np.array(vector, dtype=float)
    size = lower.shape[0]
    for k in range(size):
        radius = np.hypot(lower[k, k], vector[k])
        cosine = radius / lower[k, k]
        sine = vector[k] / lower[k, k]
        lower[k, k] = radius
        if k + 1 < size:
            lower[k + 1 :, k] = (lower[k + 1 :, k] + sine * vector[k + 1 :]) / cosine
            vector[k + 1 :] = cosine * vector[k + 1 :] - sine * lower[k + 1 :, k]
    return lower


def cholesky_remove_row(lower: FloatArray, index: int) -> FloatArray:
    """Factor of ``A`` with row and column *index* deleted."""
    lower = np.asarray(lower, dtype=float)
    if not 0 <= index < lower.shape[0]:
        raise IndexError(f"Row {index} is not part of the factor")
    tail = lower[index + 1 :, index]
    result = np.delete(np.delete(lower, index, axis=0), index, axis=1)
    if tail.size:
        result[index:, index:] = cholesky_update(result[index:, index:], tail)
    return result


def fill_reducing_ordering(eq_jacobian: sp.spmatrix) -> IndexArray:
    """Reverse Cuthill-McKee ordering of the equality block pattern."""
    pattern = sp.csr_matrix(eq_jacobian)
    pattern = (abs(pattern) @ abs(pattern).T).tocsr()
    if pattern.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.asarray(reverse_cuthill_mckee(pattern, symmetric_mode=True), dtype=np.int64)


def first_dependent_row(
    reduced: FloatArray, tolerance: float = DEPENDENCE_TOLERANCE
) -> Optional[int]:
    """Index of the first row of a dense reduced matrix dependent on the ones before it."""
    lower = np.zeros((0, 0))
    for k in range(reduced.shape[0]):
        try:
            lower = cholesky_add_row(lower, reduced[k, :k], float(reduced[k, k]), tolerance)
        except DependentRowError:
            return k
    return None


def factor_equalities(reduced: sp.spmatrix, tolerance: float = DEPENDENCE_TOLERANCE) -> SuperLU:
    """Sparse LU of the equality block with diagonal pivots, in the given order.

    Pivots are checked against their diagonal entry, so a row that is a
    combination of the rows eliminated before it is reported instead of
    being solved through roundoff.

    Raises:
        DependentRowError: Carrying the index of the first row whose
            pivot falls below ``tolerance`` times its diagonal.
    """
    reduced = sp.csc_matrix(reduced)
    diagonal = reduced.diagonal()
    if np.any(diagonal <= 0.0):
        row = int(np.flatnonzero(diagonal <= 0.0)[0])
        raise DependentRowError(float(diagonal[row]), row=row)
    try:
        lu = splu(
            reduced,
            permc_spec="NATURAL",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as error:
        row = first_dependent_row(reduced.toarray(), tolerance)
        raise DependentRowError(0.0, row=0 if row is None else row) from error
    # Pr A Pc = L U; with diagonal pivots both permutations agree.
    pivots = lu.U.diagonal()[lu.perm_c]
    weak = pivots <= tolerance * diagonal
    if np.any(weak):
        candidates = np.flatnonzero(weak)
        row = int(candidates[np.argmin(lu.perm_c[candidates])])
        raise DependentRowError(float(pivots[row]), row=row)
    return lu


def independent_rows(
    jacobian: sp.spmatrix,
    inverse_mass: FloatArray,
    tolerance: float = SELECTION_TOLERANCE,
    fixed_columns: Optional[IndexArray] = None,
) -> IndexArray:
    """Indices of a linearly independent subset of *jacobian*'s rows, ascending.

    Rows are compared in the ``M^-1`` metric after scaling to unit
    length, with a column-pivoted QR of their transpose; a row whose
    remaining part is below ``sqrt(tolerance)`` is dropped. Columns in
    *fixed_columns* are held by rows kept elsewhere, a row is measured
    by its part on the other columns against its full length.
    """
    jacobian = sp.csr_matrix(jacobian)
    n_rows, n_columns = jacobian.shape
    if n_rows == 0:
        return np.zeros(0, dtype=np.int64)
    free = np.ones(n_columns, dtype=bool)
    if fixed_columns is not None:
        free[np.asarray(fixed_columns, dtype=np.int64)] = False
    scaled = jacobian @ sp.diags(np.sqrt(np.asarray(inverse_mass, dtype=float)))
    norms = np.sqrt(np.asarray(scaled.multiply(scaled).sum(axis=1)).ravel())
    scaled = scaled[:, np.flatnonzero(free)].toarray()
    nonzero = norms > 0.0
    scaled[nonzero] /= norms[nonzero, None]
    if not np.any(nonzero) or scaled.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    upper, permutation = qr(scaled.T, mode="r", pivoting=True)
    rank = int(np.count_nonzero(np.abs(np.diag(upper)) > np.sqrt(tolerance)))
    return np.sort(np.asarray(permutation[:rank], dtype=np.int64))


class BorderedFactor:
    """Factorization of ``J M^-1 J^T`` for the equality and working rows.

    Arguments:
        inverse_mass: Diagonal of ``M^-1``.
        eq_jacobian: Equality rows, always part of the system.
        ineq_jacobian: All inequality rows, addressed by index.
        ordering: Optional precomputed ordering of the equality rows.

    Raises:
        DependentRowError: Carrying the equality row that depends on
            the rows eliminated before it.
    """

    def __init__(
        self,
        inverse_mass: FloatArray,
        eq_jacobian: sp.spmatrix,
        ineq_jacobian: sp.spmatrix,
        ordering: Optional[IndexArray] = None,
        tolerance: float = DEPENDENCE_TOLERANCE,
    ) -> None:
        self.inverse_mass = np.asarray(inverse_mass, dtype=float)
        self.eq_jacobian = sp.csr_matrix(eq_jacobian)
        self.ineq_jacobian = sp.csr_matrix(ineq_jacobian)
        self.tolerance = tolerance
        self.rows: List[int] = []
        self.updates = 0
        self._couplings: List[FloatArray] = []
        self._lower = np.zeros((0, 0))
        self._lu = None

        n_eq = self.eq_jacobian.shape[0]
        self._ordering = np.arange(n_eq) if ordering is None else np.asarray(ordering)
        if n_eq:
            reduced = (self.eq_jacobian @ sp.diags(self.inverse_mass) @ self.eq_jacobian.T).tocsr()
            try:
                self._lu = factor_equalities(
                    reduced[self._ordering][:, self._ordering], tolerance
                )
            except DependentRowError as error:
                error.row = int(self._ordering[error.row])
                raise

    @property
    def n_equalities(self) -> int:
        return int(self.eq_jacobian.shape[0])

    def __len__(self) -> int:
        return len(self.rows)

    def _solve_equalities(self, rhs: FloatArray) -> FloatArray:
        if self._lu is None:
            return np.zeros(0)
        result = np.empty_like(rhs, dtype=float)
        result[self._ordering] = self._lu.solve(np.asarray(rhs, dtype=float)[self._ordering])
        return result

    def _products(self, row: int) -> Tuple[FloatArray, FloatArray, float]:
        scaled = self.ineq_jacobian[row].toarray().ravel() * self.inverse_mass
        border_eq = self.eq_jacobian @ scaled
        border_ineq = (
            self.ineq_jacobian[self.rows] @ scaled if self.rows else np.zeros(0)
        )
        diagonal = float(self.ineq_jacobian[row] @ scaled)
        return border_eq, np.asarray(border_ineq).ravel(), diagonal

    def add(self, row: int) -> None:
        """Border inequality *row* onto the factor.

        Raises:
            DependentRowError: Carrying the coefficients that express
                the row through the working inequality rows.
        """
        if row in self.rows:
            raise ValueError(f"Row {row} is already factored")
        border_eq, border_ineq, diagonal = self._products(row)
        coupling = self._solve_equalities(border_eq)
        schur_border = border_ineq - np.array(
            [weights @ border_eq for weights in self._couplings]
        ).reshape(-1)
        schur_diagonal = diagonal - float(coupling @ border_eq)
        try:
            self._lower = cholesky_add_row(
                self._lower, schur_border, schur_diagonal, self.tolerance, scale=diagonal
            )
        except DependentRowError as error:
            _, coefficients = self.solve(border_eq, border_ineq)
            error.coefficients = dict(zip(self.rows, coefficients.tolist()))
            raise
        self.rows.append(row)
        self._couplings.append(coupling)
        self.updates += 1

    def remove(self, row: int) -> None:
        index = self.rows.index(row)
        self._lower = cholesky_remove_row(self._lower, index)
        del self.rows[index]
        del self._couplings[index]
        self.updates += 1

    def solve(self, rhs_eq: FloatArray, rhs_ineq: FloatArray) -> Tuple[FloatArray, FloatArray]:
        """Solve the reduced system for the equality and working rows."""
        base = self._solve_equalities(rhs_eq)
        if not self.rows:
            return base, np.zeros(0)
        projected = np.array([weights @ rhs_eq for weights in self._couplings])
        working = cho_solve((self._lower, True), np.asarray(rhs_ineq, dtype=float) - projected)
        if self._lu is not None:
            base = base - np.column_stack(self._couplings) @ working
        return base, working

    def schur_matrix(self) -> FloatArray:
        return self._lower @ self._lower.T

    def reduced_matrix(self) -> FloatArray:
        """Dense ``J M^-1 J^T`` of the equality and working rows."""
        jacobian = sp.vstack([self.eq_jacobian, self.ineq_jacobian[self.rows]]).toarray()
        return (jacobian * self.inverse_mass) @ jacobian.T
