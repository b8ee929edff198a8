"""Rigid obstacles, cusp sets and the hitting stick.

Implicit obstacles are evaluated in signed-distance form, one
inequality row per mesh node, ``H(p) >= 0`` outside the obstacle.
"""
from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .collision import (
    ContactRecord,
    edge_edge_record,
    node_face_record,
    point_triangle_distances,
    segment_closest,
    sweep_edge_edge,
    sweep_node_face,
)
from .constraints import ConstraintKind, ContactBlock
from .exceptions import ConfigurationError
from .mesh import ClothMesh
from .typing import FilePath, FloatArray
from .utils import file_path_to_path, normalize, rotation_about

_VERTICAL = np.array([0.0, 0.0, 1.0])


@dataclass
class Motion:
    """Rigid placement timeline of an obstacle.

    ``keyframes`` rows are ``(t, dx, dy, dz)`` translations of the
    obstacle, interpolated linearly and held constant outside their
    range. An optional spin rotates the obstacle about ``spin_axis``
    through its (translated) pivot at ``spin_rate`` rad/s between
    ``spin_start`` and ``spin_end``.
    """

    keyframes: FloatArray = field(default_factory=lambda: np.zeros((0, 4)))
    spin_axis: FloatArray = field(default_factory=lambda: _VERTICAL.copy())
    spin_rate: float = 0.0
    spin_start: float = 0.0
    spin_end: float = 0.0

    def __post_init__(self) -> None:
        self.keyframes = np.asarray(self.keyframes, dtype=float).reshape(-1, 4)
        self.spin_axis = normalize(np.asarray(self.spin_axis, dtype=float))
        if self.keyframes.shape[0] > 1 and np.any(np.diff(self.keyframes[:, 0]) <= 0):
            raise ConfigurationError("Motion keyframes must be strictly increasing in time")
        if self.spin_rate and self.spin_end < self.spin_start:
            raise ConfigurationError("Spin must end after it starts")

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "Motion":
        spin = params.get("spin") or {}
        return cls(
            keyframes=np.asarray(params.get("translation") or np.zeros((0, 4)), dtype=float),
            spin_axis=np.asarray(spin.get("axis", (0.0, 0.0, 1.0)), dtype=float),
            spin_rate=float(spin.get("rate", 0.0)),
            spin_start=float(spin.get("start", 0.0)),
            spin_end=float(spin.get("end", 0.0)),
        )

    @property
    def is_static(self) -> bool:
        return self.keyframes.shape[0] == 0 and self.spin_rate == 0.0

    def translation(self, time: float) -> FloatArray:
        if self.keyframes.shape[0] == 0:
            return np.zeros(3)
        times = self.keyframes[:, 0]
        return np.array([np.interp(time, times, self.keyframes[:, 1 + axis]) for axis in range(3)])

    def translation_velocity(self, time: float) -> FloatArray:
        """Finite difference of the placements over the active keyframe segment."""
        if self.keyframes.shape[0] < 2:
            return np.zeros(3)
        times = self.keyframes[:, 0]
        if time < times[0] or time >= times[-1]:
            return np.zeros(3)
        segment = int(np.searchsorted(times, time, side="right")) - 1
        span = times[segment + 1] - times[segment]
        return (self.keyframes[segment + 1, 1:] - self.keyframes[segment, 1:]) / span

    def angle(self, time: float) -> float:
        if self.spin_rate == 0.0:
            return 0.0
        active = min(max(time, self.spin_start), self.spin_end) - self.spin_start
        return self.spin_rate * active

    def angular_velocity(self, time: float) -> FloatArray:
        if self.spin_rate == 0.0 or not (self.spin_start <= time < self.spin_end):
            return np.zeros(3)
        return self.spin_rate * self.spin_axis


class ImplicitObstacle(ABC):
    """An obstacle described by a signed distance in its body frame."""

    kind = "implicit"

    def __init__(
        self,
        pivot: Sequence[float],
        mu: float = 0.0,
        motion: Optional[Motion] = None,
        name: str = "",
    ) -> None:
        if mu < 0:
            raise ConfigurationError(f"Friction coefficient must be non-negative, got {mu}")
        self.pivot = np.asarray(pivot, dtype=float)
        self.mu = float(mu)
        self.motion = motion or Motion()
        self.name = name or self.kind

    @abstractmethod
    def _local_distance(self, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        """Signed distances and gradients of body-frame points."""

    def _placement(self, time: float) -> Tuple[FloatArray, FloatArray]:
        rotation = rotation_about(self.motion.spin_axis, self.motion.angle(time))
        return rotation, self.pivot + self.motion.translation(time)

    def distance(self, points: FloatArray, time: float = 0.0) -> Tuple[FloatArray, FloatArray]:
        """Signed distance ``H`` and its gradient at world *points*."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rotation, centre = self._placement(time)
        local = (points - centre) @ rotation + self.pivot
        values, gradients = self._local_distance(local)
        return values, gradients @ rotation.T

    def point_velocity(self, points: FloatArray, time: float = 0.0) -> FloatArray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _, centre = self._placement(time)
        spin = self.motion.angular_velocity(time)
        return self.motion.translation_velocity(time) + np.cross(spin, points - centre)


class Plane(ImplicitObstacle):
    kind = "plane"

    def __init__(
        self,
        point: Sequence[float] = (0.0, 0.0, 0.0),
        normal: Sequence[float] = (0.0, 0.0, 1.0),
        **kwargs: Any,
    ) -> None:
        super().__init__(point, **kwargs)
        self.normal = normalize(np.asarray(normal, dtype=float))
        if not np.any(self.normal):
            raise ConfigurationError("Plane normal must be non-zero")

    def _local_distance(self, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        values = (points - self.pivot) @ self.normal
        return values, np.broadcast_to(self.normal, points.shape).copy()


class Sphere(ImplicitObstacle):
    kind = "sphere"

    def __init__(self, center: Sequence[float], radius: float, **kwargs: Any) -> None:
        super().__init__(center, **kwargs)
        if radius <= 0:
            raise ConfigurationError("Sphere radius must be positive")
        self.radius = float(radius)

    def _local_distance(self, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        offsets = points - self.pivot
        lengths = np.linalg.norm(offsets, axis=1)
        gradients = np.tile(_VERTICAL, (points.shape[0], 1))
        inside = lengths > 0
        gradients[inside] = offsets[inside] / lengths[inside, None]
        return lengths - self.radius, gradients


class Cylinder(ImplicitObstacle):
    """A capped cylinder standing on ``base`` along ``axis``."""

    kind = "cylinder"

    def __init__(
        self,
        base: Sequence[float],
        radius: float,
        height: float,
        axis: Sequence[float] = (0.0, 0.0, 1.0),
        **kwargs: Any,
    ) -> None:
        super().__init__(base, **kwargs)
        if radius <= 0 or height <= 0:
            raise ConfigurationError("Cylinder radius and height must be positive")
        self.radius = float(radius)
        self.height = float(height)
        self.axis = normalize(np.asarray(axis, dtype=float))

    def _local_distance(self, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        offsets = points - self.pivot
        along = offsets @ self.axis
        radial = offsets - along[:, None] * self.axis
        rho = np.linalg.norm(radial, axis=1)
        fallback = normalize(np.cross(self.axis, [1.0, 0.0, 0.0]))
        if not np.any(fallback):
            fallback = normalize(np.cross(self.axis, [0.0, 1.0, 0.0]))
        radial_unit = np.tile(fallback, (points.shape[0], 1))
        nonzero = rho > 0
        radial_unit[nonzero] = radial[nonzero] / rho[nonzero, None]

        middle = along - 0.5 * self.height
        axial_unit = np.sign(middle)[:, None] * self.axis
        axial_unit[middle == 0] = self.axis
        d_radial = rho - self.radius
        d_axial = np.abs(middle) - 0.5 * self.height

        corner = (d_radial > 0) & (d_axial > 0)
        values = np.where(corner, np.hypot(d_radial, d_axial), np.maximum(d_radial, d_axial))
        gradients = np.where((d_radial >= d_axial)[:, None], radial_unit, axial_unit)
        if np.any(corner):
            gradients[corner] = (
                d_radial[corner, None] * radial_unit[corner]
                + d_axial[corner, None] * axial_unit[corner]
            ) / values[corner, None]
        return values, gradients


class NeedleField(ImplicitObstacle):
    """Egg-crate field ``c1 c2 z - sin(c1 x) sin(c1 y)`` rescaled to a distance.

    The value is divided by the gradient norm at the query point; the
    returned gradient is the exact gradient of that quotient.
    """

    kind = "needles"

    def __init__(
        self,
        c1: float = 20.0,
        c2: float = 0.075,
        origin: Sequence[float] = (0.0, 0.0, 0.0),
        **kwargs: Any,
    ) -> None:
        super().__init__(origin, **kwargs)
        if c1 <= 0 or c2 <= 0:
            raise ConfigurationError("Needle constants must be positive")
        self.c1 = float(c1)
        self.c2 = float(c2)

    @property
    def cusp_height(self) -> float:
        return 1.0 / (self.c1 * self.c2)

    def raw(self, points: FloatArray) -> FloatArray:
        offsets = np.atleast_2d(points) - self.pivot
        x, y = self.c1 * offsets[:, 0], self.c1 * offsets[:, 1]
        return self.c1 * self.c2 * offsets[:, 2] - np.sin(x) * np.sin(y)

    def _local_distance(self, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        c1 = self.c1
        offsets = points - self.pivot
        x, y = c1 * offsets[:, 0], c1 * offsets[:, 1]
        sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
        raw = c1 * self.c2 * offsets[:, 2] - sx * sy
        grad = np.stack([-c1 * cx * sy, -c1 * sx * cy, np.full_like(x, c1 * self.c2)], axis=1)
        h_xx = c1 * c1 * sx * sy
        h_xy = -c1 * c1 * cx * cy
        hess_grad = np.stack(
            [
                h_xx * grad[:, 0] + h_xy * grad[:, 1],
                h_xy * grad[:, 0] + h_xx * grad[:, 1],
                np.zeros_like(x),
            ],
            axis=1,
        )
        norm = np.linalg.norm(grad, axis=1)
        values = raw / norm
        gradients = grad / norm[:, None] - raw[:, None] * hess_grad / norm[:, None] ** 3
        return values, gradients


OBSTACLE_TYPES = {cls.kind: cls for cls in (Plane, Sphere, Cylinder, NeedleField)}

OBSTACLE_PARAMETERS: Dict[str, Tuple[str, ...]] = {
    "plane": ("point", "normal"),
    "sphere": ("center", "radius"),
    "cylinder": ("base", "radius", "height", "axis"),
    "needles": ("c1", "c2", "origin", "cusp_extent"),
}
_COMMON_PARAMETERS = ("kind", "mu", "translation", "spin")


def build_obstacle(name: str, params: Mapping[str, Any]) -> ImplicitObstacle:
    """Create an obstacle from its configuration section."""
    params = {key.lower(): value for key, value in params.items()}
    kind = params.get("kind")
    if kind not in OBSTACLE_TYPES:
        raise ConfigurationError(f"Obstacle {name!r} has unknown kind {kind!r}")
    allowed = set(OBSTACLE_PARAMETERS[kind]) | set(_COMMON_PARAMETERS)
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigurationError(f"Obstacle {name!r} has unknown keys: {', '.join(unknown)}")
    shape = {
        key: value
        for key, value in params.items()
        if key in OBSTACLE_PARAMETERS[kind] and key != "cusp_extent"
    }
    try:
        return OBSTACLE_TYPES[kind](
            **shape, mu=float(params.get("mu", 0.0)), motion=Motion.from_params(params), name=name
        )
    except TypeError as error:
        raise ConfigurationError(f"Obstacle {name!r}: {error}") from error


def eval_obstacle(
    obstacle: ImplicitObstacle,
    positions: FloatArray,
    time: float,
    mesh: Optional[ClothMesh] = None,
    face_midpoints: bool = False,
) -> ContactBlock:
    """One row per node (and optionally per quad centre) for *obstacle*."""
    nodes = np.asarray(positions, dtype=float).reshape(-1, 3)
    n_nodes = nodes.shape[0]
    values, gradients = obstacle.distance(nodes, time)
    velocities = obstacle.point_velocity(nodes, time)
    coefficients = sp.identity(n_nodes, format="csr")
    keys: List[Any] = [("obstacle", obstacle.name, node) for node in range(n_nodes)]

    if face_midpoints and mesh is not None:
        centres = nodes[mesh.quads].mean(axis=1)
        centre_values, centre_gradients = obstacle.distance(centres, time)
        rows = np.repeat(np.arange(mesh.n_quads), 4)
        quarter = sp.csr_matrix(
            (np.full(rows.shape[0], 0.25), (rows, mesh.quads.reshape(-1))),
            shape=(mesh.n_quads, n_nodes),
        )
        coefficients = sp.vstack([coefficients, quarter]).tocsr()
        values = np.concatenate([values, centre_values])
        gradients = np.concatenate([gradients, centre_gradients])
        velocities = np.concatenate([velocities, obstacle.point_velocity(centres, time)])
        keys.extend(("obstacle-face", obstacle.name, quad) for quad in range(mesh.n_quads))

    return ContactBlock.assemble(
        ConstraintKind.OBSTACLE,
        values,
        coefficients,
        gradients,
        -velocities,
        np.full(values.shape[0], obstacle.mu),
        keys,
    )


def sphere_surface_velocity(
    obstacle: ImplicitObstacle, point: Sequence[float], time: float
) -> FloatArray:
    """Rigid-body velocity of the obstacle material point at *point*."""
    return obstacle.point_velocity(np.asarray(point, dtype=float), time)[0]


@dataclass(frozen=True)
class CuspSet:
    points: FloatArray

    def __len__(self) -> int:
        return int(self.points.shape[0])


def needle_cusps(
    field_: NeedleField, lower: Sequence[float], upper: Sequence[float]
) -> CuspSet:
    """Cusps of *field_* whose ``(x, y)`` lie in the rectangle ``[lower, upper]``.

    Peaks sit where both sines equal one or both equal minus one.
    """
    c1 = field_.c1
    origin = field_.pivot
    points = []
    for phase in (0.5 * np.pi, -0.5 * np.pi):
        m_x = np.arange(
            np.floor((c1 * (lower[0] - origin[0]) - phase) / (2 * np.pi)),
            np.ceil((c1 * (upper[0] - origin[0]) - phase) / (2 * np.pi)) + 1,
        )
        m_y = np.arange(
            np.floor((c1 * (lower[1] - origin[1]) - phase) / (2 * np.pi)),
            np.ceil((c1 * (upper[1] - origin[1]) - phase) / (2 * np.pi)) + 1,
        )
        xs = origin[0] + (2 * np.pi * m_x + phase) / c1
        ys = origin[1] + (2 * np.pi * m_y + phase) / c1
        for x in xs:
            for y in ys:
                if lower[0] <= x <= upper[0] and lower[1] <= y <= upper[1]:
                    points.append((x, y, origin[2] + field_.cusp_height))
    points.sort()
    return CuspSet(np.asarray(points, dtype=float).reshape(-1, 3))


def cusp_face_constraints(
    cusps: CuspSet,
    mesh: ClothMesh,
    phi_n: FloatArray,
    phi_j: FloatArray,
    dt: float,
    omega: float = 0.0,
    thickness: float = 0.0,
    iteration: int = 0,
    mu: float = 0.0,
) -> List[ContactRecord]:
    """Records for every mesh triangle swept across a cusp point."""
    if len(cusps) == 0:
        return []
    start = np.asarray(phi_n, dtype=float).reshape(-1, 3)
    end = np.asarray(phi_j, dtype=float).reshape(-1, 3)
    tris = mesh.tris
    reach = (
        np.linalg.norm(end - start, axis=1)[tris].max(axis=1) + 2.0 * omega * thickness + thickness
    )

    records: List[ContactRecord] = []
    for index, cusp in enumerate(cusps.points):
        cusp_rows = np.broadcast_to(cusp, (tris.shape[0], 3))
        near = point_triangle_distances(
            cusp_rows, start[tris[:, 0]], start[tris[:, 1]], start[tris[:, 2]]
        ) <= reach
        for tri in np.flatnonzero(near):
            a, b, c = (int(node) for node in tris[tri])
            tri_start = np.vstack([start[[a, b, c]], cusp])
            tri_end = np.vstack([end[[a, b, c]], cusp])
            if sweep_node_face(tri_start, tri_end, dt, omega * thickness) is None:
                continue
            record = node_face_record(
                tri_start,
                tri_end,
                (a, b, c, -1),
                ("cusp", index, int(tri)),
                thickness,
                iteration,
                kind=ConstraintKind.CUSP,
                mu=mu,
            )
            if record is not None:
                records.append(record)
    records.sort(key=lambda record: record.key)
    return records


@dataclass
class StickObstacle:
    """A straight stick sampled as endpoint trajectories.

    ``endpoints`` has shape ``(S, 2, 3)``; samples are interpolated
    linearly in time and held outside their range.
    """

    times: FloatArray
    endpoints: FloatArray
    radius: float = 0.0075
    segments: int = 8
    mu: float = 0.0

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.endpoints = np.asarray(self.endpoints, dtype=float).reshape(-1, 2, 3)
        if self.times.shape[0] != self.endpoints.shape[0] or self.times.shape[0] == 0:
            raise ConfigurationError("Stick needs one endpoint pair per sample time")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("Stick samples must be strictly increasing in time")
        if self.radius <= 0:
            raise ConfigurationError("Stick radius must be positive")
        if self.segments < 1:
            raise ConfigurationError("Stick needs at least one segment")

    @classmethod
    def from_waypoints(cls, rows: Sequence[Sequence[float]], **kwargs: Any) -> "StickObstacle":
        data = np.asarray(rows, dtype=float).reshape(-1, 7)
        return cls(data[:, 0], data[:, 1:].reshape(-1, 2, 3), **kwargs)

    @classmethod
    def from_csv(cls, path: FilePath, **kwargs: Any) -> "StickObstacle":
        """Load ``t, x1, y1, z1, x2, y2, z2`` rows, a header line is allowed."""
        rows = []
        with open(file_path_to_path(path), newline="") as file_:
            for row in csv.reader(file_):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(value) for value in row[:7]])
                except ValueError:
                    if rows:
                        raise ConfigurationError(f"Malformed stick sample {row!r}")
        if not rows:
            raise ConfigurationError(f"Stick trajectory {path!r} is empty")
        return cls.from_waypoints(rows, **kwargs)

    def endpoints_at(self, time: float) -> FloatArray:
        flat = self.endpoints.reshape(-1, 6)
        return np.array([np.interp(time, self.times, flat[:, k]) for k in range(6)]).reshape(2, 3)

    def points_at(self, time: float) -> FloatArray:
        first, second = self.endpoints_at(time)
        fractions = np.linspace(0.0, 1.0, self.segments + 1)[:, None]
        return first + fractions * (second - first)


def stick_edge_constraints(
    stick: StickObstacle,
    mesh: ClothMesh,
    phi_n: FloatArray,
    phi_j: FloatArray,
    t_n: float,
    dt: float,
    omega: float = 0.0,
    iteration: int = 0,
) -> List[ContactRecord]:
    """Edge-edge records between stick segments and cloth edges.

    A pair is recorded when the swept segments cross (after the
    proximity shift) or when they end closer than the stick radius
    while approaching.
    """
    start = np.asarray(phi_n, dtype=float).reshape(-1, 3)
    end = np.asarray(phi_j, dtype=float).reshape(-1, 3)
    stick_start = stick.points_at(t_n)
    stick_end = stick.points_at(t_n + dt)
    radius = stick.radius
    edges = mesh.edges

    edge_points = np.concatenate([start[edges], end[edges]], axis=1)
    edge_lower = edge_points.min(axis=1)
    edge_upper = edge_points.max(axis=1)
    displacement = float(np.linalg.norm(end - start, axis=1).max(initial=0.0))
    margin = radius + 0.1 * displacement

    records: List[ContactRecord] = []
    for segment in range(stick.segments):
        seg_start = stick_start[segment : segment + 2]
        seg_end = stick_end[segment : segment + 2]
        corners = np.vstack([seg_start, seg_end])
        lower = corners.min(axis=0) - margin
        upper = corners.max(axis=0) + margin
        overlap = np.all((edge_lower <= upper) & (lower <= edge_upper), axis=1)
        for edge in np.flatnonzero(overlap):
            a, b = (int(node) for node in edges[edge])
            pair_start = np.vstack([seg_start, start[[a, b]]])
            pair_end = np.vstack([seg_end, end[[a, b]]])
            crossed = sweep_edge_edge(pair_start, pair_end, dt, omega * radius) is not None
            if not crossed:
                _, _, gap_start = segment_closest(*pair_start)
                _, _, gap_end = segment_closest(*pair_end)
                crossed = gap_end[0] < radius and gap_end[0] < gap_start[0]
            if not crossed:
                continue
            s, _, _ = segment_closest(*pair_end)
            velocity = (
                (1.0 - s[0]) * (seg_end[0] - seg_start[0]) + s[0] * (seg_end[1] - seg_start[1])
            ) / dt
            record = edge_edge_record(
                pair_start,
                pair_end,
                (-1, -1, a, b),
                ("stick", segment, int(edge)),
                radius,
                iteration,
                kind=ConstraintKind.STICK,
                mu=stick.mu,
                anchor_velocity=tuple(float(x) for x in velocity),  # type: ignore[arg-type]
            )
            if record is not None:
                records.append(record)
    records.sort(key=lambda record: record.key)
    return records


__all__ = [
    "CuspSet",
    "Cylinder",
    "ImplicitObstacle",
    "Motion",
    "NeedleField",
    "Plane",
    "Sphere",
    "StickObstacle",
    "build_obstacle",
    "cusp_face_constraints",
    "eval_obstacle",
    "needle_cusps",
    "sphere_surface_velocity",
    "stick_edge_constraints",
]
