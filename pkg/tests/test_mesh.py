from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

import drape
from drape.exceptions import ConfigurationError
from drape.mesh import (
    build_mesh,
    ClothMesh,
    ClothState,
    load_obj,
    lumped_mass,
    MassMatrix,
    write_obj,
)

SHORTS = Path(drape.__file__).parent / "assets" / "shorts.obj"


def test_grid_numbering() -> None:
    mesh = build_mesh(7, 9, 0.42, 0.594)
    assert mesh.n_nodes == 63
    assert mesh.n_quads == 48
    assert mesh.shape == (7, 9)
    assert mesh.node(3, 2) == 17
    np.testing.assert_allclose(mesh.rest_positions[mesh.node(6, 8)], [0.42, 0.594, 0.0])
    assert mesh.corner_nodes() == (0, 6, 62, 56)
    assert mesh.tris.shape == (96, 3)
    # Quad q splits into triangles 2q and 2q + 1 along its first diagonal
    np.testing.assert_array_equal(mesh.tris[0], [0, 1, 8])
    np.testing.assert_array_equal(mesh.tris[1], [0, 8, 7])


def test_grid_edges() -> None:
    mesh = build_mesh(3, 2, 1.0, 1.0)
    # horizontal, vertical and one diagonal per quad
    assert mesh.edges.shape[0] == 2 * 2 + 3 * 1 + 2
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])


def test_rest_metric_of_square_grid() -> None:
    mesh = build_mesh(5, 5, 0.4, 0.4)
    spacing = 0.1
    np.testing.assert_allclose(
        mesh.rest_metric, np.tile([spacing**2, 0.0, spacing**2], (16, 1)), atol=1e-15
    )
    assert mesh.rest_area == pytest.approx(0.16)


def test_hanging_plane_and_rotation() -> None:
    mesh = build_mesh(2, 3, 0.2, 0.4, origin=(1.0, 0.0, 0.5), plane="xz", rotation=90.0)
    # The width now runs along y, the height upwards
    np.testing.assert_allclose(mesh.rest_positions[1], [1.0, 0.2, 0.5], atol=1e-12)
    np.testing.assert_allclose(mesh.rest_positions[mesh.node(0, 2)], [1.0, 0.0, 0.9], atol=1e-12)


@pytest.mark.parametrize(
    "arguments",
    [
        (1, 3, 1.0, 1.0),
        (3, 3, 0.0, 1.0),
        (3, 3, 1.0, -1.0),
    ],
)
def test_build_mesh_invalid(arguments: tuple) -> None:
    with pytest.raises(ConfigurationError):
        build_mesh(*arguments)


def test_build_mesh_unknown_plane() -> None:
    with pytest.raises(ConfigurationError):
        build_mesh(3, 3, 1.0, 1.0, plane="yz")


def test_degenerate_quad() -> None:
    positions = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]
    with pytest.raises(ConfigurationError):
        ClothMesh.from_quads(positions, [[0, 1, 2, 3]])


def test_quad_with_repeated_node() -> None:
    positions = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    with pytest.raises(ConfigurationError):
        ClothMesh.from_quads(positions, [[0, 1, 1, 3]])


def test_shorts_template() -> None:
    mesh = load_obj(SHORTS, origin=(0.0, 0.0, 0.15))
    assert mesh.shape is None
    assert mesh.n_nodes == 31
    assert mesh.n_quads == 24
    with pytest.raises(AttributeError):
        mesh.nx


def test_obj_round_trip(tmp_path: Path, patch_mesh: ClothMesh) -> None:
    positions = patch_mesh.rest_vector + 0.01
    write_obj(tmp_path / "patch.obj", patch_mesh, positions)
    loaded = load_obj(tmp_path / "patch.obj")
    np.testing.assert_allclose(loaded.rest_vector, positions)
    np.testing.assert_array_equal(loaded.quads, patch_mesh.quads)


def test_obj_rejects_triangles(tmp_path: Path) -> None:
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(ConfigurationError):
        load_obj(path)


def test_lumped_mass(patch_mesh: ClothMesh) -> None:
    mass = lumped_mass(patch_mesh, 0.1042)
    assert mass.total == pytest.approx(0.1042 * 0.04)
    quarter = 0.1042 * 0.01 / 4
    # corner, edge and centre nodes touch 1, 2 and 4 quads
    np.testing.assert_allclose(mass.node_masses[[0, 1, 4]], [quarter, 2 * quarter, 4 * quarter])
    assert mass.diagonal.shape == (27,)
    np.testing.assert_allclose(mass.inverse * mass.diagonal, 1.0)
    assert isinstance(mass.restrict([0, 4]), MassMatrix)
    assert mass.restrict([0, 4]).total == pytest.approx(5 * quarter)


def test_lumped_mass_invalid_density(patch_mesh: ClothMesh) -> None:
    with pytest.raises(ConfigurationError):
        lumped_mass(patch_mesh, 0.0)


def test_state(patch_mesh: ClothMesh) -> None:
    state = ClothState.at_rest(patch_mesh, time=0.5)
    assert state.nodes.shape == (9, 3)
    assert state.kinetic_energy(lumped_mass(patch_mesh, 1.0)) == 0.0
    moved = state.replace(velocities=np.ones(27))
    assert moved.time == 0.5
    assert moved.kinetic_energy(lumped_mass(patch_mesh, 1.0)) == pytest.approx(1.5 * 0.04)


def test_state_rejects_non_finite() -> None:
    positions = np.zeros(6)
    positions[2] = np.nan
    with pytest.raises(ValueError):
        ClothState(positions, np.zeros(6))
    with pytest.raises(ValueError):
        ClothState(np.zeros(6), np.zeros(3))
