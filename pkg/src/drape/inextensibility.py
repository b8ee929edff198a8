"""Inextensibility constraints, the discrete first fundamental form.

Each quad contributes three residuals, ``E - E0``, ``F - F0`` and
``G - G0``, evaluated with bilinear shape functions at the quad centre.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .constraints import ConstraintBlock, ConstraintKind
from .mesh import ClothMesh, ETA_WEIGHTS, quad_metric, quad_tangents, XI_WEIGHTS
from .typing import FloatArray


@dataclass
class InextConstraintSet:
    values: FloatArray
    jacobian: sp.csr_matrix

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def as_block(self) -> ConstraintBlock:
        keys = [("inext", row) for row in range(self.values.shape[0])]
        return ConstraintBlock(ConstraintKind.INEXTENSIBILITY, self.values, self.jacobian, keys)


def eval_inext(mesh: ClothMesh, positions: FloatArray) -> InextConstraintSet:
    nodes = np.asarray(positions, dtype=float).reshape(-1, 3)
    quads = mesh.quads
    n_quads = quads.shape[0]

    residuals = quad_metric(quads, nodes) - mesh.rest_metric
    x_xi, x_eta = quad_tangents(quads, nodes)

    # derivatives of E, F and G with respect to corner c, shape (Q, 4, 3)
    d_e = 2.0 * XI_WEIGHTS[None, :, None] * x_xi[:, None, :]
    d_f = (
        XI_WEIGHTS[None, :, None] * x_eta[:, None, :]
        + ETA_WEIGHTS[None, :, None] * x_xi[:, None, :]
    )
    d_g = 2.0 * ETA_WEIGHTS[None, :, None] * x_eta[:, None, :]
    data = np.stack([d_e, d_f, d_g], axis=1)  # (Q, 3, 4, 3)

    rows = np.broadcast_to(
        (3 * np.arange(n_quads)[:, None] + np.arange(3))[:, :, None, None], data.shape
    )
    cols = np.broadcast_to((3 * quads[:, None, :, None] + np.arange(3)), data.shape)
    jacobian = sp.csr_matrix(
        (data.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
        shape=(3 * n_quads, 3 * mesh.n_nodes),
    )
    return InextConstraintSet(residuals.reshape(-1), jacobian)


def inext_gradient_check(mesh: ClothMesh, positions: FloatArray, h: float = 1e-6) -> float:
    """Largest deviation between the analytic and a central-difference Jacobian."""
    if h <= 0:
        raise ValueError("Finite-difference step must be positive")
    positions = np.asarray(positions, dtype=float)
    analytic = eval_inext(mesh, positions).jacobian.toarray()
    numeric = np.zeros_like(analytic)
    for column in range(positions.shape[0]):
        forward = positions.copy()
        backward = positions.copy()
        forward[column] += h
        backward[column] -= h
        numeric[:, column] = (
            eval_inext(mesh, forward).values - eval_inext(mesh, backward).values
        ) / (2.0 * h)
    return float(np.max(np.abs(analytic - numeric)))
