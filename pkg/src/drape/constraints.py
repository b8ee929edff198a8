from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np
import scipy.sparse as sp

from .typing import FloatArray, RowKey


class ConstraintKind(Enum):
    INEXTENSIBILITY = "inextensibility"
    PIN = "pin"
    OBSTACLE = "obstacle"
    SELF_COLLISION = "self-collision"
    CUSP = "cusp"
    STICK = "stick"


@dataclass
class ConstraintBlock:
    """A group of constraint rows, values and sparse gradients.

    Equality blocks are ``C(phi) = 0``, inequality blocks are
    ``H(phi) >= 0``.
    """

    kind: ConstraintKind
    values: FloatArray
    jacobian: sp.csr_matrix
    keys: List[RowKey]

    def __post_init__(self) -> None:
        if self.jacobian.shape[0] != self.values.shape[0] or len(self.keys) != self.values.shape[0]:
            raise ValueError("Constraint block rows are inconsistent")

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def select(self, rows: Sequence[int]) -> "ConstraintBlock":
        rows = np.asarray(rows, dtype=np.int64)
        return ConstraintBlock(
            self.kind, self.values[rows], self.jacobian[rows], [self.keys[row] for row in rows]
        )


@dataclass
class ContactBlock(ConstraintBlock):
    """Inequality rows of the form ``anchor + sum_k c_k <x_k, d>``.

    Every row couples a set of nodes through one spatial direction, so
    the gradient of row ``i`` is ``coefficients[i, k] * directions[i]``
    on the columns of node ``k``. The same structure places the
    friction tangent rows.
    """

    coefficients: sp.csr_matrix = None  # type: ignore[assignment]
    directions: FloatArray = None  # type: ignore[assignment]
    anchor_velocity: FloatArray = None  # type: ignore[assignment]
    mu: FloatArray = None  # type: ignore[assignment]
    kinds: List[ConstraintKind] = field(default_factory=list)

    @classmethod
    def assemble(
        cls,
        kind: ConstraintKind,
        values: FloatArray,
        coefficients: sp.csr_matrix,
        directions: FloatArray,
        anchor_velocity: FloatArray,
        mu: FloatArray,
        keys: List[RowKey],
        kinds: Sequence[ConstraintKind] = (),
    ) -> "ContactBlock":
        jacobian = spread_rows(coefficients, directions)
        return cls(
            kind,
            np.asarray(values, dtype=float),
            jacobian,
            list(keys),
            coefficients.tocsr(),
            np.asarray(directions, dtype=float).reshape(-1, 3),
            np.asarray(anchor_velocity, dtype=float).reshape(-1, 3),
            np.asarray(mu, dtype=float),
            list(kinds) or [kind] * len(keys),
        )

    @classmethod
    def empty(cls, n_nodes: int, kind: ConstraintKind = ConstraintKind.OBSTACLE) -> "ContactBlock":
        return cls.assemble(
            kind,
            np.zeros(0),
            sp.csr_matrix((0, n_nodes)),
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros(0),
            [],
        )

    def select(self, rows: Sequence[int]) -> "ContactBlock":
        rows = np.asarray(rows, dtype=np.int64)
        return type(self).assemble(
            self.kind,
            self.values[rows],
            self.coefficients[rows],
            self.directions[rows],
            self.anchor_velocity[rows],
            self.mu[rows],
            [self.keys[row] for row in rows],
            [self.kinds[row] for row in rows],
        )

    @classmethod
    def concatenate(cls, blocks: Sequence["ContactBlock"], n_nodes: int) -> "ContactBlock":
        blocks = [block for block in blocks if len(block) > 0]
        if not blocks:
            return cls.empty(n_nodes)
        return cls.assemble(
            blocks[0].kind,
            np.concatenate([block.values for block in blocks]),
            sp.vstack([block.coefficients for block in blocks]).tocsr(),
            np.concatenate([block.directions for block in blocks]),
            np.concatenate([block.anchor_velocity for block in blocks]),
            np.concatenate([block.mu for block in blocks]),
            [key for block in blocks for key in block.keys],
            [kind for block in blocks for kind in block.kinds],
        )


def spread_rows(coefficients: sp.csr_matrix, directions: FloatArray) -> sp.csr_matrix:
    """Expand node coefficients times per-row directions to 3N columns."""
    coo = coefficients.tocoo()
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    rows = np.repeat(coo.row, 3)
    cols = (3 * coo.col[:, None] + np.arange(3)).reshape(-1)
    data = (coo.data[:, None] * directions[coo.row]).reshape(-1)
    return sp.csr_matrix(
        (data, (rows, cols)), shape=(coefficients.shape[0], 3 * coefficients.shape[1])
    )


def stack_jacobians(blocks: Sequence[ConstraintBlock], n_columns: int) -> sp.csr_matrix:
    matrices = [block.jacobian for block in blocks if len(block) > 0]
    if not matrices:
        return sp.csr_matrix((0, n_columns))
    return sp.vstack(matrices).tocsr()
