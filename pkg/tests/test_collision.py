from __future__ import annotations

from typing import Tuple

import numpy as np
import pytest

from drape.collision import (
    audit_intersections,
    broad_phase,
    closest_triangle_weights,
    ContactRecord,
    coplanarity_times,
    detect_collisions,
    edge_edge_test,
    merge_records,
    node_face_test,
    records_block,
    segment_closest,
    sweep_edge_edge,
    sweep_node_face,
)
from drape.constraints import ConstraintKind
from drape.mesh import ClothMesh

SQUARE = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.1, 0.1, 0.0], [0.0, 0.1, 0.0]]


def _two_quads(second: np.ndarray) -> ClothMesh:
    return ClothMesh.from_quads(np.vstack([SQUARE, second]), [[0, 1, 2, 3], [4, 5, 6, 7]])


def _lifted(height: float) -> np.ndarray:
    return np.asarray(SQUARE) + [0.02, 0.03, height]


def test_segment_closest() -> None:
    s, t, distance = segment_closest(
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, -0.5, 1.0], [0.5, 0.5, 1.0]
    )
    assert s[0] == pytest.approx(0.5)
    assert t[0] == pytest.approx(0.5)
    assert distance[0] == pytest.approx(1.0)


def test_segment_closest_clamps() -> None:
    s, t, distance = segment_closest(
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 1.0, 0.0]
    )
    assert (s[0], t[0]) == (1.0, 0.0)
    assert distance[0] == pytest.approx(np.sqrt(2.0))


def test_closest_triangle_weights() -> None:
    a = np.zeros(3)
    b = np.array([1.0, 0.0, 0.0])
    c = np.array([0.0, 1.0, 0.0])
    assert closest_triangle_weights(np.array([0.25, 0.25, 1.0]), a, b, c) == pytest.approx(
        (0.5, 0.25, 0.25)
    )
    assert closest_triangle_weights(np.array([-1.0, -1.0, 0.0]), a, b, c) == (1.0, 0.0, 0.0)
    assert closest_triangle_weights(np.array([0.5, -1.0, 0.0]), a, b, c) == pytest.approx(
        (0.5, 0.5, 0.0)
    )


def test_edge_edge_crossing() -> None:
    result = edge_edge_test([0, 0, 0], [1, 1, 0], [1, 0, 0], [0, 1, 0])
    assert result == pytest.approx((0.5, 0.5))


def test_edge_edge_parallel() -> None:
    assert edge_edge_test([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]) is None


def test_edge_edge_touching_ends() -> None:
    assert edge_edge_test([0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 1, 0]) == pytest.approx((1.0, 0.0))


def test_edge_edge_collinear_overlap() -> None:
    alpha, beta = edge_edge_test([0, 0, 0], [1, 0, 0], [0.5, 0, 0], [1.5, 0, 0])
    assert alpha == pytest.approx(0.75)
    assert beta == pytest.approx(0.25)


def test_node_face_inside() -> None:
    weights = node_face_test([0, 0, 0], [1, 0, 0], [0, 1, 0], [1 / 3, 1 / 3, 0])
    assert weights == pytest.approx((1 / 3, 1 / 3, 1 / 3))


@pytest.mark.parametrize("node", [[1.0, 1.0, 0.0], [0.2, 0.2, 0.1]])
def test_node_face_outside(node: list) -> None:
    assert node_face_test([0, 0, 0], [1, 0, 0], [0, 1, 0], node) is None


def test_coplanarity_static() -> None:
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.3, 0.3, 0]], dtype=float)
    assert coplanarity_times(points, np.zeros((4, 3)), 0.1) == [0.0]


@pytest.mark.parametrize(
    "distance, speed, dt, expected",
    [(0.1, 2.0, 0.1, [0.05]), (0.1, 2.0, 0.01, []), (0.1, 1.0, 0.1, [0.1])],
)
def test_coplanarity_approach(distance: float, speed: float, dt: float, expected: list) -> None:
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.2, distance]], dtype=float)
    velocities = np.zeros((4, 3))
    velocities[3, 2] = -speed
    assert coplanarity_times(points, velocities, dt) == pytest.approx(expected)


def _barycentric(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Signed volumes and barycentric weights of node 3 in triangle 0-1-2, per sample."""
    v0 = y[:, 1] - y[:, 0]
    v1 = y[:, 2] - y[:, 0]
    v2 = y[:, 3] - y[:, 0]
    volume = np.einsum("ij,ij->i", v2, np.cross(v0, v1))
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return volume, np.stack([1.0 - v - w, v, w], axis=1)


def test_node_face_sweep_against_sampling(rng: np.random.Generator) -> None:
    times = np.linspace(0.0, 1.0, 1001)
    clear_hits = detected_hits = 0
    false_alarms = 0
    for _ in range(10_000):
        start = rng.uniform(-1.0, 1.0, size=(4, 3))
        end = start + rng.normal(scale=0.5, size=(4, 3))
        samples = start[None] + times[:, None, None] * (end - start)[None]
        volume, weights = _barycentric(samples)
        sign = np.sign(volume)
        crossings = np.flatnonzero(sign[:-1] * sign[1:] < 0)
        hit = False
        for index in crossings:
            fraction = volume[index] / (volume[index] - volume[index + 1])
            at_root = weights[index] + fraction * (weights[index + 1] - weights[index])
            hit = hit or at_root.min() >= 1e-2
        found = sweep_node_face(start, end, 1.0, 0.0) is not None
        if hit:
            clear_hits += 1
            detected_hits += found
        elif crossings.size == 0 and np.abs(volume).min() > 1e-3:
            false_alarms += found
    assert clear_hits > 100
    assert detected_hits >= 0.99 * clear_hits
    assert false_alarms == 0


def test_sweep_node_face_earliest() -> None:
    start = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.2, 0.1]], dtype=float)
    end = start.copy()
    end[3, 2] = -0.1
    assert sweep_node_face(start, end, 0.01, 0.0) == pytest.approx(0.005)
    # moving sideways past the triangle
    end = start.copy()
    end[3] = [2.0, 2.0, 0.1]
    assert sweep_node_face(start, end, 0.01, 0.0) is None


def test_sweep_node_face_proximity_shift() -> None:
    start = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.2, 0.1]], dtype=float)
    end = start.copy()
    end[3, 2] = 0.05
    assert sweep_node_face(start, end, 1.0, 0.0) is None
    # both sides move 0.03 closer, so the node now reaches the face
    assert sweep_node_face(start, end, 1.0, 0.03) == pytest.approx(0.8)


def test_sweep_edge_edge() -> None:
    start = np.array([[0, 0, 0], [1, 0, 0], [0.5, -0.5, 0.1], [0.5, 0.5, 0.1]], dtype=float)
    end = start.copy()
    end[2:, 2] = -0.1
    assert sweep_edge_edge(start, end, 1.0, 0.0) == pytest.approx(0.5)
    end[2:, 0] = 2.0
    assert sweep_edge_edge(start, end, 1.0, 0.0) is None


def test_broad_phase_skips_neighbours() -> None:
    mesh = _two_quads(_lifted(0.01))
    phi = mesh.rest_vector
    for pair in broad_phase(mesh, phi, phi, 0.0):
        if pair.kind == "edge-edge":
            first, second = mesh.edges[list(pair.indices)]
            assert not set(first) & set(second)
        else:
            node, tri = pair.indices
            assert node not in mesh.tris[tri]


def test_broad_phase_far_apart() -> None:
    mesh = _two_quads(_lifted(1.0))
    phi = mesh.rest_vector
    for pair in broad_phase(mesh, phi, phi, 0.0):
        if pair.kind == "edge-edge":
            nodes = mesh.edges[list(pair.indices)].reshape(-1)
        else:
            nodes = np.append(mesh.tris[pair.indices[1]], pair.indices[0])
        assert np.all(nodes < 4) or np.all(nodes >= 4)


def test_detect_falling_quad() -> None:
    mesh = _two_quads(_lifted(0.01))
    start = mesh.rest_vector
    end = np.vstack([SQUARE, _lifted(-0.01)]).reshape(-1)
    records = detect_collisions(mesh, start, end, 0.01, 0.0, 0.001, iteration=2, mu=0.4)
    kinds = {record.key[1] for record in records}
    assert "node-face" in kinds
    for record in records:
        assert record.key[0] == "self"
        assert record.kind == ConstraintKind.SELF_COLLISION
        assert record.iteration == 2
        assert record.mu == 0.4
        assert record.value(start) > 0 > record.value(end)
    assert records == sorted(records, key=lambda record: record.key)


def test_detect_separating_quad() -> None:
    mesh = _two_quads(_lifted(0.01))
    end = np.vstack([SQUARE, _lifted(0.03)]).reshape(-1)
    assert detect_collisions(mesh, mesh.rest_vector, end, 0.01, 0.0, 0.001) == []


def test_detect_within_proximity() -> None:
    mesh = _two_quads(_lifted(0.01))
    end = np.vstack([SQUARE, _lifted(0.004)]).reshape(-1)
    assert detect_collisions(mesh, mesh.rest_vector, end, 0.01, 0.0, 0.005) == []
    # the shifted sweep sees the quads closing within the thickness
    assert detect_collisions(mesh, mesh.rest_vector, end, 0.01, 0.45, 0.005) != []


@pytest.mark.parametrize("omega", [-0.1, 0.5])
def test_detect_invalid_omega(omega: float) -> None:
    mesh = _two_quads(_lifted(0.01))
    with pytest.raises(ValueError):
        detect_collisions(mesh, mesh.rest_vector, mesh.rest_vector, 0.01, omega, 0.001)


def test_records_block() -> None:
    mesh = _two_quads(_lifted(0.01))
    start = mesh.rest_vector
    end = np.vstack([SQUARE, _lifted(-0.01)]).reshape(-1)
    records = detect_collisions(mesh, start, end, 0.01, 0.0, 0.001)
    block = records_block(records, end, mesh.n_nodes)
    assert len(block) == len(records)
    assert block.keys == [record.key for record in records]
    np.testing.assert_allclose(block.values, [record.value(end) for record in records])
    # rows are linear in the positions, so the jacobian reproduces the values
    np.testing.assert_allclose(
        block.jacobian @ (end - start), block.values - [record.value(start) for record in records],
        atol=1e-12,
    )


def test_records_block_empty() -> None:
    block = records_block([], np.zeros(12), 4)
    assert len(block) == 0
    assert block.jacobian.shape == (0, 12)


def test_merge_records_replaces_by_key() -> None:
    def record(key: tuple, iteration: int) -> ContactRecord:
        return ContactRecord(
            ConstraintKind.SELF_COLLISION,
            "node-face",
            key,
            (0, 1, 2, 3),
            (1.0, 0.0, 0.0),
            (-1.0, 0.0, 0.0, 1.0),
            (0.0, 0.0, 1.0),
            0.001,
            iteration=iteration,
        )

    merged = merge_records({}, [record(("self", "node-face", (3, 1)), 0)])
    merged = merge_records(
        merged, [record(("self", "node-face", (3, 1)), 1), record(("self", "edge-edge", (0, 5)), 1)]
    )
    assert len(merged) == 2
    assert merged[("self", "node-face", (3, 1))].iteration == 1
    assert list(merged) == sorted(merged, key=str)


def test_audit_intersections() -> None:
    piercing = np.array(
        [[0.03, 0.05, -0.05], [0.07, 0.05, -0.05], [0.07, 0.05, 0.05], [0.03, 0.05, 0.05]]
    )
    mesh = _two_quads(piercing)
    assert audit_intersections(mesh, mesh.rest_vector) != []
    lifted = np.vstack([SQUARE, piercing + [0.0, 0.0, 0.1]]).reshape(-1)
    assert audit_intersections(mesh, lifted) == []


def test_audit_flat_grid(patch_mesh: ClothMesh) -> None:
    assert audit_intersections(patch_mesh, patch_mesh.rest_vector) == []
