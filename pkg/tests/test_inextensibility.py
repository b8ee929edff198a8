from __future__ import annotations

from typing import Tuple

import numpy as np
import pytest
from hypothesis import given, settings, strategies as strategies

from drape.constraints import ConstraintKind
from drape.inextensibility import eval_inext, inext_gradient_check
from drape.mesh import build_mesh, ClothMesh
from drape.utils import rotation_about

MESH = build_mesh(4, 3, 0.3, 0.2, origin=(0.1, -0.2, 0.5))

coordinates = strategies.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def test_rest_residuals(hanging_mesh: ClothMesh) -> None:
    constraints = eval_inext(hanging_mesh, hanging_mesh.rest_vector)
    assert constraints.values.shape == (3 * 48,)
    assert constraints.jacobian.shape == (3 * 48, 3 * 63)
    assert constraints.max_residual == 0.0


def test_block_keys(patch_mesh: ClothMesh) -> None:
    block = eval_inext(patch_mesh, patch_mesh.rest_vector).as_block()
    assert block.kind == ConstraintKind.INEXTENSIBILITY
    assert block.keys[:3] == [("inext", 0), ("inext", 1), ("inext", 2)]
    assert len(block) == 12


@given(
    axis=strategies.tuples(coordinates, coordinates, coordinates).filter(
        lambda axis: np.linalg.norm(axis) > 0.1
    ),
    angle=strategies.floats(min_value=-np.pi, max_value=np.pi),
    translation=strategies.tuples(coordinates, coordinates, coordinates),
)
def test_rigid_motion_is_isometric(
    axis: Tuple[float, float, float], angle: float, translation: Tuple[float, float, float]
) -> None:
    rotation = rotation_about(np.asarray(axis), angle)
    nodes = MESH.rest_positions @ rotation.T + np.asarray(translation)
    assert eval_inext(MESH, nodes.reshape(-1)).max_residual < 1e-12


@pytest.mark.parametrize("scale", [0.5, 1.1, 2.0])
def test_uniform_scaling(scale: float) -> None:
    centre = MESH.rest_positions.mean(axis=0)
    nodes = centre + scale * (MESH.rest_positions - centre)
    values = eval_inext(MESH, nodes.reshape(-1)).values.reshape(-1, 3)
    np.testing.assert_allclose(values, (scale**2 - 1.0) * MESH.rest_metric, atol=1e-15)


def test_shear_changes_off_diagonal_only() -> None:
    mesh = build_mesh(2, 2, 1.0, 1.0)
    nodes = mesh.rest_positions.copy()
    # slide the top row along x by 0.1
    nodes[2:, 0] += 0.1
    values = eval_inext(mesh, nodes.reshape(-1)).values
    np.testing.assert_allclose(values, [0.0, 0.1, 0.01], atol=1e-15)


def test_gradient_at_rest() -> None:
    assert inext_gradient_check(MESH, MESH.rest_vector, 1e-6) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=strategies.integers(min_value=0, max_value=2**32 - 1))
def test_gradient_random_state(seed: int) -> None:
    rng = np.random.default_rng(seed)
    positions = MESH.rest_vector + rng.normal(scale=0.05, size=3 * MESH.n_nodes)
    assert inext_gradient_check(MESH, positions, 1e-6) < 1e-5


def test_gradient_translation_invariant(rng: np.random.Generator) -> None:
    positions = MESH.rest_vector + rng.normal(scale=0.05, size=3 * MESH.n_nodes)
    shifted = positions + np.tile([0.3, -1.0, 2.0], MESH.n_nodes)
    first = eval_inext(MESH, positions).jacobian.toarray()
    second = eval_inext(MESH, shifted).jacobian.toarray()
    np.testing.assert_allclose(first, second, atol=1e-14)


def test_gradient_check_rejects_step() -> None:
    with pytest.raises(ValueError):
        inext_gradient_check(MESH, MESH.rest_vector, 0.0)
