"""Quad cloth meshes, state snapshots and the lumped mass matrix.

Positions are stored node-major: ``phi[3 * k : 3 * k + 3]`` is node ``k``.
Grid meshes number their nodes ``k = j * nx + i`` and every quad lists
its corners as ``(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError
from .typing import FilePath, FloatArray, IndexArray
from .utils import file_path_to_path, rotation_about

# Bilinear shape function derivatives at the quad centre, per corner.
XI_WEIGHTS = np.array([-0.5, 0.5, 0.5, -0.5])
ETA_WEIGHTS = np.array([-0.5, -0.5, 0.5, 0.5])


def quad_tangents(quads: IndexArray, nodes: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Return the parametric tangents at every quad centre."""
    corners = nodes[quads]  # (Q, 4, 3)
    x_xi = np.einsum("c,qcd->qd", XI_WEIGHTS, corners)
    x_eta = np.einsum("c,qcd->qd", ETA_WEIGHTS, corners)
    return x_xi, x_eta


def quad_metric(quads: IndexArray, nodes: FloatArray) -> FloatArray:
    """First fundamental form ``(E, F, G)`` at each quad centre."""
    x_xi, x_eta = quad_tangents(quads, nodes)
    return np.stack(
        [
            np.einsum("qd,qd->q", x_xi, x_xi),
            np.einsum("qd,qd->q", x_xi, x_eta),
            np.einsum("qd,qd->q", x_eta, x_eta),
        ],
        axis=1,
    )


def quad_areas(quads: IndexArray, nodes: FloatArray) -> FloatArray:
    corners = nodes[quads]
    first = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    second = np.cross(corners[:, 2] - corners[:, 0], corners[:, 3] - corners[:, 0])
    return 0.5 * (np.linalg.norm(first, axis=1) + np.linalg.norm(second, axis=1))


@dataclass(frozen=True, eq=False)
class ClothMesh:
    rest_positions: FloatArray
    quads: IndexArray
    tris: IndexArray
    edges: IndexArray
    rest_metric: FloatArray
    shape: Optional[Tuple[int, int]] = None

    @property
    def n_nodes(self) -> int:
        return int(self.rest_positions.shape[0])

    @property
    def n_quads(self) -> int:
        return int(self.quads.shape[0])

    @property
    def nx(self) -> int:
        if self.shape is None:
            raise AttributeError("Template meshes have no grid shape")
        return self.shape[0]

    @property
    def ny(self) -> int:
        if self.shape is None:
            raise AttributeError("Template meshes have no grid shape")
        return self.shape[1]

    @property
    def rest_vector(self) -> FloatArray:
        return self.rest_positions.reshape(-1).copy()

    @cached_property
    def rest_area(self) -> float:
        return float(quad_areas(self.quads, self.rest_positions).sum())

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Node adjacency (including the diagonal) as a boolean matrix."""
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1], np.arange(self.n_nodes)])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0], np.arange(self.n_nodes)])
        data = np.ones(rows.shape[0], dtype=bool)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    def node(self, i: int, j: int) -> int:
        return j * self.nx + i

    def corner_nodes(self) -> Tuple[int, int, int, int]:
        """Grid corners, bottom-left, bottom-right, top-right, top-left."""
        nx, ny = self.nx, self.ny
        return 0, nx - 1, nx * ny - 1, nx * (ny - 1)

    @classmethod
    def from_quads(
        cls,
        positions: FloatArray,
        quads: Sequence[Sequence[int]],
        shape: Optional[Tuple[int, int]] = None,
    ) -> "ClothMesh":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        quads_array = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
        n_nodes = positions.shape[0]
        if quads_array.size == 0:
            raise ConfigurationError("A cloth mesh needs at least one quad")
        if quads_array.min() < 0 or quads_array.max() >= n_nodes:
            raise ConfigurationError("Quad references an unknown node")
        if any(len(set(quad)) != 4 for quad in quads_array.tolist()):
            raise ConfigurationError("Quads must reference 4 distinct nodes")

        tris = np.concatenate([quads_array[:, [0, 1, 2]], quads_array[:, [0, 2, 3]]])
        # interleave so the triangles of quad q are 2q and 2q + 1
        tris = tris.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
        pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        edges = np.unique(np.sort(pairs, axis=1), axis=0)

        metric = quad_metric(quads_array, positions)
        scale = np.maximum(metric[:, 0] * metric[:, 2], np.finfo(float).tiny)
        determinant = metric[:, 0] * metric[:, 2] - metric[:, 1] ** 2
        if np.any(metric[:, 0] <= 0) or np.any(metric[:, 2] <= 0) or np.any(
            determinant <= 1e-12 * scale
        ):
            raise ConfigurationError("Rest metric is not positive definite for every quad")

        return cls(positions.copy(), quads_array, tris, edges, metric, shape)


def build_mesh(
    nx: int,
    ny: int,
    width: float,
    height: float,
    origin: Sequence[float] = (0.0, 0.0, 0.0),
    plane: str = "xy",
    rotation: float = 0.0,
) -> ClothMesh:
    """Build a regular ``nx`` by ``ny`` grid of size ``width`` by ``height``.

    Arguments:
        nx: Nodes along the width.
        ny: Nodes along the height.
        width: Extent along the first grid direction, metres.
        height: Extent along the second grid direction, metres.
        origin: Position of node ``(0, 0)``.
        plane: ``"xy"`` for a horizontal sheet, ``"xz"`` for a hanging one
            (``j`` grows upwards).
        rotation: Rotation about the vertical axis through ``origin`` in
            degrees.
    """
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise ConfigurationError(f"Grid needs at least 2x2 nodes, got {nx}x{ny}")
    if width <= 0 or height <= 0:
        raise ConfigurationError("Cloth dimensions must be positive")
    if plane not in ("xy", "xz"):
        raise ConfigurationError(f"Unknown mesh plane {plane!r}")
    nx, ny = int(nx), int(ny)

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    u = (i.reshape(-1) / (nx - 1)) * width
    v = (j.reshape(-1) / (ny - 1)) * height
    local = np.zeros((nx * ny, 3))
    local[:, 0] = u
    if plane == "xy":
        local[:, 1] = v
    else:
        local[:, 2] = v
    if rotation:
        local = local @ rotation_about(np.array([0.0, 0.0, 1.0]), np.radians(rotation)).T
    positions = local + np.asarray(origin, dtype=float)

    quads = []
    for jj in range(ny - 1):
        for ii in range(nx - 1):
            a = jj * nx + ii
            quads.append((a, a + 1, a + nx + 1, a + nx))
    return ClothMesh.from_quads(positions, quads, shape=(nx, ny))


def load_obj(
    path: FilePath, origin: Sequence[float] = (0.0, 0.0, 0.0), rotation: float = 0.0
) -> ClothMesh:
    """Load a quad-only wavefront mesh as a (template) cloth mesh."""
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    with open(file_path_to_path(path)) as file_:
        for line in file_:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vertices.append([float(value) for value in parts[1:4]])
            elif parts[0] == "f":
                indices = [int(part.split("/")[0]) - 1 for part in parts[1:]]
                if len(indices) != 4:
                    raise ConfigurationError(f"Only quad faces are supported, got {line!r}")
                faces.append(indices)
    positions = np.asarray(vertices, dtype=float)
    if rotation:
        positions = positions @ rotation_about(np.array([0.0, 0.0, 1.0]), np.radians(rotation)).T
    return ClothMesh.from_quads(positions + np.asarray(origin, dtype=float), faces)


def write_obj(path: FilePath, mesh: ClothMesh, positions: FloatArray) -> None:
    nodes = np.asarray(positions, dtype=float).reshape(-1, 3)
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in nodes]
    lines.extend(
        "f " + " ".join(str(index + 1) for index in quad) for quad in mesh.quads.tolist()
    )
    file_path_to_path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class MassMatrix:
    node_masses: FloatArray

    @property
    def diagonal(self) -> FloatArray:
        return np.repeat(self.node_masses, 3)

    @property
    def inverse(self) -> FloatArray:
        return 1.0 / self.diagonal

    @property
    def total(self) -> float:
        return float(self.node_masses.sum())

    def restrict(self, nodes: Iterable[int]) -> "MassMatrix":
        return MassMatrix(self.node_masses[np.asarray(list(nodes), dtype=np.int64)])


def lumped_mass(mesh: ClothMesh, density: float) -> MassMatrix:
    """Give every node a quarter of the mass of each incident quad."""
    if density <= 0:
        raise ConfigurationError(f"Density must be positive, got {density}")
    quarter = 0.25 * density * quad_areas(mesh.quads, mesh.rest_positions)
    masses = np.zeros(mesh.n_nodes)
    np.add.at(masses, mesh.quads, quarter[:, None])
    if np.any(masses <= 0):
        raise ConfigurationError("Mesh has nodes without an incident quad")
    return MassMatrix(masses)


@dataclass(frozen=True)
class ClothState:
    positions: FloatArray
    velocities: FloatArray
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 1:
            raise ValueError("Positions and velocities must be flat vectors of equal length")
        if self.positions.shape[0] % 3 != 0:
            raise ValueError("State length must be a multiple of 3")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("State contains non-finite entries")

    @classmethod
    def at_rest(cls, mesh: ClothMesh, time: float = 0.0) -> "ClothState":
        positions = mesh.rest_vector
        return cls(positions, np.zeros_like(positions), time)

    @property
    def nodes(self) -> FloatArray:
        return self.positions.reshape(-1, 3)

    def kinetic_energy(self, mass: MassMatrix) -> float:
        return 0.5 * float(np.dot(mass.diagonal * self.velocities, self.velocities))

    def replace(self, **changes: object) -> "ClothState":
        return replace(self, **changes)
