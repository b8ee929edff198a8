"""Coulomb friction from the contact multipliers of the previous iterate.

All quantities are in the units of the quadratic program, where a
multiplier is an impulse times the step (``kg m``); divide by ``dt**2``
for newtons.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .constraints import ContactBlock, spread_rows
from .typing import FloatArray, RowKey
from .utils import normalize_rows

#: Tangential speeds below this, in m/s, give no sliding direction.
STATIC_GUARD = 1e-8


@dataclass
class FrictionState:
    """Sliding directions and normal magnitudes of the active contacts.

    ``rows`` holds the unit tangent rows ``V`` over the ``3N`` position
    columns; a contact below the static guard has a zero row.
    """

    tangents: FloatArray
    rows: sp.csr_matrix
    slip: FloatArray
    magnitudes: FloatArray
    mu: FloatArray
    keys: List[RowKey] = field(default_factory=list)
    limits: Optional[FloatArray] = None

    def __len__(self) -> int:
        return int(self.tangents.shape[0])

    @property
    def impulses(self) -> FloatArray:
        """Friction magnitude ``mu * beta`` per contact, capped when limits are known."""
        impulses = self.mu * self.magnitudes
        if self.limits is not None:
            impulses = np.minimum(impulses, self.limits)
        return impulses

    @property
    def vectors(self) -> FloatArray:
        """Tangential impulse per contact, ``impulse * tangent``, shape ``(k, 3)``."""
        return self.impulses[:, None] * self.tangents

    def by_key(self) -> Dict[RowKey, FloatArray]:
        return {key: vector for key, vector in zip(self.keys, self.vectors)}


def tangent_velocities(
    block: ContactBlock, velocities: FloatArray, guard: float = STATIC_GUARD
) -> Tuple[FloatArray, FloatArray]:
    """Unit relative tangent velocities and tangential speeds of *block*.

    The relative velocity of a contact is the velocity of its cloth
    point minus that of the touching obstacle point, projected onto the
    plane orthogonal to the contact normal.
    """
    nodes = np.asarray(velocities, dtype=float).reshape(-1, 3)
    relative = block.coefficients @ nodes + block.anchor_velocity
    normals = normalize_rows(block.directions)
    tangential = relative - np.einsum("ij,ij->i", relative, normals)[:, None] * normals
    slip = np.linalg.norm(tangential, axis=1)
    tangents = normalize_rows(tangential, guard)
    slip = np.where(slip > guard, slip, 0.0)
    return tangents, slip


def row_norms(jacobian: sp.spmatrix) -> FloatArray:
    jacobian = sp.csr_matrix(jacobian)
    return np.sqrt(np.asarray(jacobian.multiply(jacobian).sum(axis=1)).ravel())


def normal_magnitudes(block: ContactBlock, multipliers: FloatArray) -> FloatArray:
    """``beta_i = |grad H_i^T gamma_i|`` for every row of *block*."""
    return np.maximum(np.asarray(multipliers, dtype=float), 0.0) * row_norms(block.jacobian)


def friction_state(
    block: ContactBlock,
    velocities: FloatArray,
    multipliers: Mapping[RowKey, float],
    node_masses: Optional[FloatArray] = None,
    dt: Optional[float] = None,
    guard: float = STATIC_GUARD,
    previous: Optional[Mapping[RowKey, FloatArray]] = None,
) -> FrictionState:
    """Assemble the friction of *block* from multipliers keyed by row.

    Rows absent from *multipliers* carry no normal force and no
    friction. With *node_masses* and *dt* every impulse is limited to
    the one stopping the contact within the step, which makes a
    contact inside the cone stick.

    *previous* maps row keys to the friction vectors (see
    :attr:`FrictionState.vectors`) applied to the iterate *velocities*
    were taken from. Their effect is added back before the sliding
    direction and the stopping limit are taken, so a sticking contact
    keeps the same friction on the next iteration instead of losing it
    with its slip.
    """
    tangents, slip = tangent_velocities(block, velocities, guard)
    gamma = np.array([multipliers.get(key, 0.0) for key in block.keys], dtype=float)
    limits = None
    if node_masses is not None and dt is not None and len(block):
        coefficients = sp.csr_matrix(block.coefficients)
        inverse_effective = coefficients.multiply(coefficients) @ (1.0 / np.asarray(node_masses))
        effective = np.divide(
            1.0,
            inverse_effective,
            out=np.zeros_like(inverse_effective),
            where=inverse_effective > 0,
        )
        trial = tangents * slip[:, None]
        if previous:
            applied = np.array(
                [previous.get(key, np.zeros(3)) for key in block.keys], dtype=float
            ).reshape(-1, 3)
            normals = normalize_rows(block.directions)
            applied = applied - np.einsum("ij,ij->i", applied, normals)[:, None] * normals
            trial = trial + applied * (inverse_effective / dt)[:, None]
        speed = np.linalg.norm(trial, axis=1)
        tangents = normalize_rows(trial, guard)
        limits = effective * np.where(speed > guard, speed, 0.0) * dt
    return FrictionState(
        tangents,
        spread_rows(block.coefficients, tangents),
        slip,
        normal_magnitudes(block, gamma),
        np.asarray(block.mu, dtype=float),
        list(block.keys),
        limits,
    )


def friction_force(
    state: FrictionState,
    multipliers: Optional[FloatArray] = None,
    gradients: Optional[sp.spmatrix] = None,
) -> FloatArray:
    """``f = -sum_i mu_i beta_i V_i``.

    When *multipliers* and the constraint *gradients* are given the
    magnitudes are recomputed from them instead of the stored ones.
    """
    if multipliers is not None and gradients is not None:
        state = FrictionState(
            state.tangents,
            state.rows,
            state.slip,
            np.maximum(np.asarray(multipliers, dtype=float), 0.0) * row_norms(gradients),
            state.mu,
            state.keys,
            state.limits,
        )
    if len(state) == 0:
        return np.zeros(state.rows.shape[1])
    return -(state.rows.T @ state.impulses)


def dissipation(state: FrictionState) -> float:
    """Rate of work of friction against the relative sliding, never positive."""
    return -float(state.impulses @ state.slip)
