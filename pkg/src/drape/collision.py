"""Continuous self-collision detection for cloth meshes.

Detection runs in three stages. A broad phase finds edge-edge and
node-face pairs whose swept boxes overlap. The coplanarity times of the
four moving points are found as roots of a cubic. Inclusion tests then
run at those times. Hits become :class:`ContactRecord` rows whose weights
and normal are frozen from the end of the sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from logging import getLogger
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .constraints import ConstraintKind, ContactBlock
from .mesh import ClothMesh
from .typing import FloatArray, RowKey

log = getLogger(__name__)

EDGE_EDGE = "edge-edge"
NODE_FACE = "node-face"

#: Distance below which a polished root counts as coplanar, metres.
COPLANARITY_TOLERANCE = 1e-9
_PARAMETER_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CandidatePair:
    kind: str
    indices: Tuple[int, int]
    distance_start: float
    distance_end: float


@dataclass(frozen=True)
class ContactRecord:
    """One linearized contact constraint.

    The constraint reads ``anchor + sum_k coefficients[k] <x_k, normal> >= thickness``
    where ``x_k`` are the positions of ``nodes``.
    """

    kind: ConstraintKind
    pair: str
    key: RowKey
    nodes: Tuple[int, ...]
    weights: Tuple[float, ...]
    coefficients: Tuple[float, ...]
    normal: Tuple[float, float, float]
    thickness: float
    anchor: float = 0.0
    anchor_velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    mu: float = 0.0
    iteration: int = 0

    def separation(self, positions: FloatArray) -> float:
        nodes = np.asarray(positions, dtype=float).reshape(-1, 3)[list(self.nodes)]
        point = np.asarray(self.coefficients) @ nodes
        return float(self.anchor + point @ np.asarray(self.normal))

    def value(self, positions: FloatArray) -> float:
        return self.separation(positions) - self.thickness


def records_block(
    records: Sequence[ContactRecord], positions: FloatArray, n_nodes: int
) -> ContactBlock:
    """Assemble contact records into inequality rows at *positions*."""
    if not records:
        return ContactBlock.empty(n_nodes, ConstraintKind.SELF_COLLISION)
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    for row, record in enumerate(records):
        rows.extend([row] * len(record.nodes))
        cols.extend(record.nodes)
        data.extend(record.coefficients)
    coefficients = sp.csr_matrix((data, (rows, cols)), shape=(len(records), n_nodes))
    return ContactBlock.assemble(
        records[0].kind,
        np.array([record.value(positions) for record in records]),
        coefficients,
        np.array([record.normal for record in records]),
        np.array([record.anchor_velocity for record in records]),
        np.array([record.mu for record in records]),
        [record.key for record in records],
        [record.kind for record in records],
    )


# Vectorized closest-point queries ------------------------------------------------


def segment_closest(
    p1: FloatArray, q1: FloatArray, p2: FloatArray, q2: FloatArray
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Closest parameters ``(s, t)`` and distances between segment arrays."""
    p1, q1, p2, q2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    tiny = np.finfo(float).tiny
    denom = a * e - b * b

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-14 * a * e, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / np.maximum(e, tiny)
        s = np.where(t < 0.0, np.clip(-c / np.maximum(a, tiny), 0.0, 1.0), s)
        s = np.where(t > 1.0, np.clip((b - c) / np.maximum(a, tiny), 0.0, 1.0), s)
        t = np.clip(t, 0.0, 1.0)

    gap = (p1 + s[:, None] * d1) - (p2 + t[:, None] * d2)
    return s, t, np.linalg.norm(gap, axis=1)


def point_segment_distances(p: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    ab = b - a
    length = np.maximum(np.einsum("ij,ij->i", ab, ab), np.finfo(float).tiny)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / length, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def point_triangle_distances(
    p: FloatArray, a: FloatArray, b: FloatArray, c: FloatArray
) -> FloatArray:
    normal = np.cross(b - a, c - a)
    area = np.linalg.norm(normal, axis=1)
    unit = normal / np.maximum(area, np.finfo(float).tiny)[:, None]
    plane = np.einsum("ij,ij->i", p - a, unit)
    projected = p - plane[:, None] * unit
    # inside test through the signs of the sub-triangle areas
    inside = (area > 0) & np.all(
        np.stack(
            [
                np.einsum("ij,ij->i", np.cross(v - u, projected - u), normal) >= 0
                for u, v in ((a, b), (b, c), (c, a))
            ]
        ),
        axis=0,
    )
    edges = np.minimum(
        np.minimum(point_segment_distances(p, a, b), point_segment_distances(p, b, c)),
        point_segment_distances(p, c, a),
    )
    return np.where(inside, np.abs(plane), edges)


def closest_triangle_weights(
    p: FloatArray, a: FloatArray, b: FloatArray, c: FloatArray
) -> Tuple[float, float, float]:
    """Barycentric weights of the point of triangle ``abc`` closest to ``p``."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = float(ab @ ap)
    d2 = float(ac @ ap)
    if d1 <= 0 and d2 <= 0:
        return 1.0, 0.0, 0.0
    bp = p - b
    d3 = float(ab @ bp)
    d4 = float(ac @ bp)
    if d3 >= 0 and d4 <= d3:
        return 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return 1.0 - v, v, 0.0
    cp = p - c
    d5 = float(ab @ cp)
    d6 = float(ac @ cp)
    if d6 >= 0 and d5 <= d6:
        return 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return 1.0 - w, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return 0.0, 1.0 - w, w
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return 1.0 - v - w, v, w


# Broad phase -----------------------------------------------------------------


def _boxes(
    start: FloatArray, end: FloatArray, elements: FloatArray, margin: float
) -> Tuple[FloatArray, FloatArray]:
    corners = np.concatenate([start[elements], end[elements]], axis=1)
    return corners.min(axis=1) - margin, corners.max(axis=1) + margin


def _overlapping(
    lower_a: FloatArray, upper_a: FloatArray, lower_b: FloatArray, upper_b: FloatArray, same: bool
) -> np.ndarray:
    """Index pairs of overlapping boxes, filtered through a kd-tree on the centres."""
    if lower_a.shape[0] == 0 or lower_b.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    centre_a = 0.5 * (lower_a + upper_a)
    centre_b = 0.5 * (lower_b + upper_b)
    radius = float(
        np.linalg.norm(0.5 * (upper_a - lower_a), axis=1).max()
        + np.linalg.norm(0.5 * (upper_b - lower_b), axis=1).max()
    )
    tree_a = cKDTree(centre_a)
    if same:
        pairs = tree_a.query_pairs(radius, output_type="ndarray")
    else:
        neighbours = tree_a.query_ball_tree(cKDTree(centre_b), radius)
        pairs = np.array(
            [(i, j) for i, js in enumerate(neighbours) for j in js], dtype=np.int64
        ).reshape(-1, 2)
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    i, j = pairs[:, 0], pairs[:, 1]
    overlap = np.all((lower_a[i] <= upper_b[j]) & (lower_b[j] <= upper_a[i]), axis=1)
    return pairs[overlap]


def broad_phase(
    mesh: ClothMesh, phi_n: FloatArray, phi_next: FloatArray, offset: float
) -> List[CandidatePair]:
    """Edge-edge and node-face pairs that can meet during the step.

    Boxes are the swept element boxes enlarged by *offset* (the
    proximity displacement ``omega * tau0``) plus a tenth of the
    largest node displacement. Pairs sharing a node are skipped, and so
    are pairs whose start distance exceeds everything the sweep and
    the offsets can close.
    """
    start = np.asarray(phi_n, dtype=float).reshape(-1, 3)
    end = np.asarray(phi_next, dtype=float).reshape(-1, 3)
    displacement = np.linalg.norm(end - start, axis=1)
    margin = offset + 0.1 * float(displacement.max(initial=0.0))

    edges = mesh.edges
    tris = mesh.tris
    nodes = np.arange(mesh.n_nodes)[:, None]

    candidates: List[CandidatePair] = []

    lower, upper = _boxes(start, end, edges, margin)
    pairs = _overlapping(lower, upper, lower, upper, same=True)
    if pairs.size:
        ea, eb = edges[pairs[:, 0]], edges[pairs[:, 1]]
        disjoint = np.all(ea[:, :, None] != eb[:, None, :], axis=(1, 2))
        pairs, ea, eb = pairs[disjoint], ea[disjoint], eb[disjoint]
        _, _, d_start = segment_closest(
            start[ea[:, 0]], start[ea[:, 1]], start[eb[:, 0]], start[eb[:, 1]]
        )
        _, _, d_end = segment_closest(end[ea[:, 0]], end[ea[:, 1]], end[eb[:, 0]], end[eb[:, 1]])
        reach = displacement[ea].max(axis=1) + displacement[eb].max(axis=1) + 2.0 * margin
        keep = d_start <= reach
        for (a, b), ds, de in zip(pairs[keep], d_start[keep], d_end[keep]):
            pair = (int(min(a, b)), int(max(a, b)))
            candidates.append(CandidatePair(EDGE_EDGE, pair, float(ds), float(de)))

    node_lower, node_upper = _boxes(start, end, nodes, margin)
    tri_lower, tri_upper = _boxes(start, end, tris, margin)
    pairs = _overlapping(node_lower, node_upper, tri_lower, tri_upper, same=False)
    if pairs.size:
        tri_nodes = tris[pairs[:, 1]]
        disjoint = np.all(tri_nodes != pairs[:, :1], axis=1)
        pairs, tri_nodes = pairs[disjoint], tri_nodes[disjoint]
        points = pairs[:, 0]
        d_start = point_triangle_distances(
            start[points], start[tri_nodes[:, 0]], start[tri_nodes[:, 1]], start[tri_nodes[:, 2]]
        )
        d_end = point_triangle_distances(
            end[points], end[tri_nodes[:, 0]], end[tri_nodes[:, 1]], end[tri_nodes[:, 2]]
        )
        reach = displacement[points] + displacement[tri_nodes].max(axis=1) + 2.0 * margin
        keep = d_start <= reach
        for (p, t), ds, de in zip(pairs[keep], d_start[keep], d_end[keep]):
            candidates.append(CandidatePair(NODE_FACE, (int(p), int(t)), float(ds), float(de)))

    candidates.sort(key=lambda pair: (pair.kind, pair.indices))
    return candidates


# Narrow phase ----------------------------------------------------------------


def cubic_coefficients(
    points: FloatArray, velocities: FloatArray
) -> Tuple[float, float, float, float]:
    """Coefficients ``(a0, a1, a2, a3)`` of the coplanarity determinant."""
    p = points[:3] - points[3]
    q = velocities[:3] - velocities[3]

    def det(a: FloatArray, b: FloatArray, c: FloatArray) -> float:
        return float(np.dot(a, np.cross(b, c)))

    a0 = det(p[0], p[1], p[2])
    a1 = det(q[0], p[1], p[2]) + det(p[0], q[1], p[2]) + det(p[0], p[1], q[2])
    a2 = det(p[0], q[1], q[2]) + det(q[0], p[1], q[2]) + det(q[0], q[1], p[2])
    a3 = det(q[0], q[1], q[2])
    return a0, a1, a2, a3


def coplanarity_times(points: FloatArray, velocities: FloatArray, dt: float) -> List[float]:
    """Times in ``[0, dt]`` at which the four moving points are coplanar.

    The coplanarity cubic is not solved in closed form. It is split into
    monotone pieces at the roots of its derivative, a piece whose ends
    change sign is bracketed with :func:`scipy.optimize.brentq` and the
    root polished by one Newton step. Ends within the tolerance count as
    roots themselves, a cubic vanishing over the whole step gives ``[0]``.

    Arguments:
        points: The four positions at the start of the step, shape (4, 3).
        velocities: Their (constant) velocities over the step.
        dt: Length of the step.
    """
    points = np.asarray(points, dtype=float).reshape(4, 3)
    velocities = np.asarray(velocities, dtype=float).reshape(4, 3)
    a0, a1, a2, a3 = cubic_coefficients(points, velocities)

    size = float(
        np.abs(points[:3] - points[3]).max() + dt * np.abs(velocities[:3] - velocities[3]).max()
    )
    tolerance = COPLANARITY_TOLERANCE * max(size, 1e-12) ** 2
    magnitudes = (abs(a1) * dt, abs(a2) * dt**2, abs(a3) * dt**3)

    if abs(a0) <= tolerance and sum(magnitudes) <= tolerance:
        return [0.0]

    def polynomial(t: float) -> float:
        return ((a3 * t + a2) * t + a1) * t + a0

    if magnitudes[1] + magnitudes[2] < 1e-12 * magnitudes[0]:
        root = -a0 / a1
        if -1e-15 <= root <= dt * (1 + 1e-12):
            return [max(root, 0.0)]
        return [0.0] if abs(a0) <= tolerance else []

    # monotone pieces between the critical points
    breaks = [0.0, dt]
    critical = np.roots([3.0 * a3, 2.0 * a2, a1]) if (a3 or a2) else []
    for root in critical:
        if abs(root.imag) < 1e-14 and 0.0 < root.real < dt:
            breaks.append(float(root.real))
    breaks.sort()

    roots: List[float] = []
    for t in breaks:
        if abs(polynomial(t)) <= tolerance:
            roots.append(t)
    for lower, upper in zip(breaks[:-1], breaks[1:]):
        f_lower, f_upper = polynomial(lower), polynomial(upper)
        if f_lower * f_upper < 0.0:
            root = brentq(polynomial, lower, upper, xtol=1e-15 * max(dt, 1.0))
            slope = (3.0 * a3 * root + 2.0 * a2) * root + a1
            if slope != 0.0:
                polished = root - polynomial(root) / slope
                if lower <= polished <= upper:
                    root = polished
            roots.append(float(root))

    roots.sort()
    unique: List[float] = []
    for root in roots:
        if not unique or root - unique[-1] > 1e-12 * max(dt, 1.0):
            unique.append(root)
    return unique


def edge_edge_test(
    y1: FloatArray, y2: FloatArray, y3: FloatArray, y4: FloatArray
) -> Optional[Tuple[float, float]]:
    """Intersection parameters of the coplanar segments ``y1y2`` and ``y3y4``."""
    y1, y2, y3, y4 = (np.asarray(y, dtype=float) for y in (y1, y2, y3, y4))
    d1 = y2 - y1
    d2 = y4 - y3
    r = y1 - y3
    a = float(d1 @ d1)
    b = float(d1 @ d2)
    c = float(d2 @ d2)
    d = float(d1 @ r)
    e = float(d2 @ r)
    if a == 0.0 or c == 0.0:
        return None
    scale = max(np.sqrt(a), np.sqrt(c), 1.0)
    distance_tolerance = COPLANARITY_TOLERANCE * scale
    denom = a * c - b * b

    if denom > 1e-12 * a * c:
        alpha = (b * e - c * d) / denom
        beta = (a * e - b * d) / denom
        if not (-_PARAMETER_TOLERANCE <= alpha <= 1 + _PARAMETER_TOLERANCE):
            return None
        if not (-_PARAMETER_TOLERANCE <= beta <= 1 + _PARAMETER_TOLERANCE):
            return None
        alpha = min(max(alpha, 0.0), 1.0)
        beta = min(max(beta, 0.0), 1.0)
        gap = (y1 + alpha * d1) - (y3 + beta * d2)
        if float(np.linalg.norm(gap)) > distance_tolerance:
            return None
        return alpha, beta

    # parallel, overlapping only when collinear
    offset = r - (d / a) * d1
    if float(np.linalg.norm(offset)) > distance_tolerance:
        return None
    s0 = float((y3 - y1) @ d1) / a
    s1 = float((y4 - y1) @ d1) / a
    lower = max(0.0, min(s0, s1))
    upper = min(1.0, max(s0, s1))
    if lower > upper + _PARAMETER_TOLERANCE:
        return None
    alpha = 0.5 * (lower + upper)
    beta = float((y1 + alpha * d1 - y3) @ d2) / c
    return alpha, min(max(beta, 0.0), 1.0)


def node_face_test(
    y1: FloatArray, y2: FloatArray, y3: FloatArray, y4: FloatArray
) -> Optional[Tuple[float, float, float]]:
    """Barycentric coordinates of node ``y4`` in triangle ``y1y2y3``."""
    y1, y2, y3, y4 = (np.asarray(y, dtype=float) for y in (y1, y2, y3, y4))
    v0 = y2 - y1
    v1 = y3 - y1
    v2 = y4 - y1
    d00 = float(v0 @ v0)
    d01 = float(v0 @ v1)
    d11 = float(v1 @ v1)
    d20 = float(v2 @ v0)
    d21 = float(v2 @ v1)
    denom = d00 * d11 - d01 * d01
    if denom <= 1e-12 * d00 * d11 or denom == 0.0:
        return None
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    u = 1.0 - v - w
    if min(u, v, w) < -_PARAMETER_TOLERANCE:
        return None
    normal = np.cross(v0, v1)
    if abs(float(v2 @ normal)) / np.sqrt(denom) > COPLANARITY_TOLERANCE * max(1.0, np.sqrt(d00)):
        return None
    weights = np.clip([u, v, w], 0.0, 1.0)
    weights /= weights.sum()
    return float(weights[0]), float(weights[1]), float(weights[2])


def _pair_normal(
    first: FloatArray, second: FloatArray, fallback: FloatArray
) -> Optional[FloatArray]:
    normal = np.cross(first, second)
    norm = float(np.linalg.norm(normal))
    scale = float(np.linalg.norm(first) * np.linalg.norm(second))
    if norm > 1e-9 * scale and norm > 0:
        return normal / norm
    norm = float(np.linalg.norm(fallback))
    if norm > 0:
        return fallback / norm
    return None


def sweep_node_face(
    start: FloatArray, end: FloatArray, dt: float, shift: float
) -> Optional[float]:
    """Earliest time the node (row 3) passes through the triangle (rows 0-2).

    The triangle and node are first moved ``shift`` towards each other
    along the start normal.
    """
    start = np.array(start, dtype=float)
    end = np.array(end, dtype=float)
    if shift > 0.0:
        weights = closest_triangle_weights(start[3], start[0], start[1], start[2])
        normal = _pair_normal(
            start[1] - start[0], start[2] - start[0], start[3] - np.asarray(weights) @ start[:3]
        )
        if normal is not None:
            if float((start[3] - start[0]) @ normal) < 0.0:
                normal = -normal
            offset = np.array([shift, shift, shift, -shift])[:, None] * normal
            start += offset
            end += offset
    velocities = (end - start) / dt
    for time in coplanarity_times(start, velocities, dt):
        y = start + time * velocities
        if node_face_test(y[0], y[1], y[2], y[3]) is not None:
            return time
    return None


def sweep_edge_edge(
    start: FloatArray, end: FloatArray, dt: float, shift: float
) -> Optional[float]:
    """Earliest time the edges (rows 0-1 and 2-3) cross, after shifting."""
    start = np.array(start, dtype=float)
    end = np.array(end, dtype=float)
    if shift > 0.0:
        s, t, _ = segment_closest(start[0], start[1], start[2], start[3])
        gap = (start[0] + s[0] * (start[1] - start[0])) - (start[2] + t[0] * (start[3] - start[2]))
        normal = _pair_normal(start[1] - start[0], start[3] - start[2], gap)
        if normal is not None:
            if float(gap @ normal) < 0.0:
                normal = -normal
            offset = np.array([-shift, -shift, shift, shift])[:, None] * normal
            start += offset
            end += offset
    velocities = (end - start) / dt
    for time in coplanarity_times(start, velocities, dt):
        y = start + time * velocities
        if edge_edge_test(y[0], y[1], y[2], y[3]) is not None:
            return time
    return None


def node_face_record(
    start: FloatArray,
    end: FloatArray,
    nodes: Tuple[int, int, int, int],
    key: RowKey,
    thickness: float,
    iteration: int,
    kind: ConstraintKind = ConstraintKind.SELF_COLLISION,
    mu: float = 0.0,
) -> Optional[ContactRecord]:
    """Freeze a node-face constraint from the end configuration.

    ``nodes`` lists the triangle first and the node last; a negative
    node index marks a fixed point (a cusp) stored in the anchor.
    """
    u, v, w = closest_triangle_weights(end[3], end[0], end[1], end[2])
    face_end = u * end[0] + v * end[1] + w * end[2]
    normal = _pair_normal(end[1] - end[0], end[2] - end[0], end[3] - face_end)
    if normal is None:
        normal = _pair_normal(start[1] - start[0], start[2] - start[0], start[3] - start[0])
    if normal is None:
        return None
    face_start = u * start[0] + v * start[1] + w * start[2]
    if float((start[3] - face_start) @ normal) < 0.0:
        normal = -normal

    coefficients = [-u, -v, -w, 1.0]
    members = list(nodes)
    anchor = 0.0
    if members[3] < 0:
        anchor = float(end[3] @ normal)
        members, coefficients = members[:3], coefficients[:3]
    return ContactRecord(
        kind=kind,
        pair=NODE_FACE,
        key=key,
        nodes=tuple(members),
        weights=(u, v, w),
        coefficients=tuple(coefficients),
        normal=tuple(float(x) for x in normal),  # type: ignore[arg-type]
        thickness=thickness,
        anchor=anchor,
        mu=mu,
        iteration=iteration,
    )


def edge_edge_record(
    start: FloatArray,
    end: FloatArray,
    nodes: Tuple[int, int, int, int],
    key: RowKey,
    thickness: float,
    iteration: int,
    kind: ConstraintKind = ConstraintKind.SELF_COLLISION,
    mu: float = 0.0,
    anchor_velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> Optional[ContactRecord]:
    """Freeze an edge-edge constraint from the end configuration.

    Negative node indices mark the first edge as external (the stick);
    its contribution moves into the anchor.
    """
    s, t, _ = segment_closest(end[0], end[1], end[2], end[3])
    alpha, beta = float(s[0]), float(t[0])
    first_end = end[0] + alpha * (end[1] - end[0])
    second_end = end[2] + beta * (end[3] - end[2])
    normal = _pair_normal(end[1] - end[0], end[3] - end[2], first_end - second_end)
    if normal is None:
        first = start[0] + alpha * (start[1] - start[0])
        second = start[2] + beta * (start[3] - start[2])
        normal = _pair_normal(start[1] - start[0], start[3] - start[2], first - second)
    if normal is None:
        return None
    first_start = start[0] + alpha * (start[1] - start[0])
    second_start = start[2] + beta * (start[3] - start[2])
    if float((first_start - second_start) @ normal) < 0.0:
        normal = -normal

    coefficients = [1.0 - alpha, alpha, -(1.0 - beta), -beta]
    members = list(nodes)
    anchor = 0.0
    if members[0] < 0:
        anchor = float(first_end @ normal)
        members, coefficients = members[2:], coefficients[2:]
    return ContactRecord(
        kind=kind,
        pair=EDGE_EDGE,
        key=key,
        nodes=tuple(members),
        weights=(alpha, beta),
        coefficients=tuple(coefficients),
        normal=tuple(float(x) for x in normal),  # type: ignore[arg-type]
        thickness=thickness,
        anchor=anchor,
        anchor_velocity=anchor_velocity,
        mu=mu,
        iteration=iteration,
    )


def detect_collisions(
    mesh: ClothMesh,
    phi_n: FloatArray,
    phi_j: FloatArray,
    dt: float,
    omega: float,
    thickness: float,
    iteration: int = 0,
    mu: float = 0.0,
) -> List[ContactRecord]:
    """Self-collision records for the motion from *phi_n* to *phi_j*.

    Arguments:
        omega: Proximity parameter in ``[0, 1/2)``, the fraction of
            the thickness each side is moved towards the other.
        thickness: Minimum separation enforced by the records.
        iteration: Stored on the records, later iterations replace
            earlier records of the same pair.
        mu: Friction coefficient of the records.
    """
    if not 0.0 <= omega < 0.5:
        raise ValueError(f"Proximity parameter must lie in [0, 0.5), got {omega}")
    if thickness < 0.0:
        raise ValueError("Thickness must be non-negative")
    start = np.asarray(phi_n, dtype=float).reshape(-1, 3)
    end = np.asarray(phi_j, dtype=float).reshape(-1, 3)
    shift = omega * thickness

    records: List[ContactRecord] = []
    for pair in broad_phase(mesh, phi_n, phi_j, shift):
        if pair.kind == EDGE_EDGE:
            first, second = mesh.edges[pair.indices[0]], mesh.edges[pair.indices[1]]
            nodes = (int(first[0]), int(first[1]), int(second[0]), int(second[1]))
            if sweep_edge_edge(start[list(nodes)], end[list(nodes)], dt, shift) is None:
                continue
            record = edge_edge_record(
                start[list(nodes)], end[list(nodes)], nodes, ("self", EDGE_EDGE, pair.indices),
                thickness, iteration, mu=mu,
            )
        else:
            point, tri = pair.indices
            a, b, c = (int(x) for x in mesh.tris[tri])
            nodes = (a, b, c, point)
            if sweep_node_face(start[list(nodes)], end[list(nodes)], dt, shift) is None:
                continue
            record = node_face_record(
                start[list(nodes)], end[list(nodes)], nodes, ("self", NODE_FACE, pair.indices),
                thickness, iteration, mu=mu,
            )
        if record is not None:
            records.append(record)

    records.sort(key=lambda record: record.key)
    if records:
        log.debug("detected %d self-contacts (omega=%g)", len(records), omega)
    return records


def merge_records(
    current: Dict[RowKey, ContactRecord], new: Iterable[ContactRecord]
) -> Dict[RowKey, ContactRecord]:
    """Merge *new* into *current*; a later record replaces an earlier one."""
    merged = dict(current)
    for record in new:
        merged[record.key] = record
    return dict(sorted(merged.items(), key=lambda item: str(item[0])))


def audit_intersections(mesh: ClothMesh, positions: FloatArray) -> List[Tuple[int, int]]:
    """Edge-triangle pairs (not sharing a node) that intersect in *positions*."""
    nodes = np.asarray(positions, dtype=float).reshape(-1, 3)
    edge_lower, edge_upper = _boxes(nodes, nodes, mesh.edges, 0.0)
    tri_lower, tri_upper = _boxes(nodes, nodes, mesh.tris, 0.0)
    pairs = _overlapping(edge_lower, edge_upper, tri_lower, tri_upper, same=False)
    hits: List[Tuple[int, int]] = []
    for edge_index, tri_index in pairs:
        edge = mesh.edges[edge_index]
        tri = mesh.tris[tri_index]
        if set(edge.tolist()) & set(tri.tolist()):
            continue
        if _segment_crosses_triangle(nodes[edge[0]], nodes[edge[1]], *nodes[tri]):
            hits.append((int(edge_index), int(tri_index)))
    return hits


def _orient(a: FloatArray, b: FloatArray, c: FloatArray, d: FloatArray) -> float:
    return float(np.dot(b - a, np.cross(c - a, d - a)))


def _segment_crosses_triangle(
    p: FloatArray, q: FloatArray, a: FloatArray, b: FloatArray, c: FloatArray
) -> bool:
    side_p = _orient(a, b, c, p)
    side_q = _orient(a, b, c, q)
    if side_p * side_q >= 0.0:
        return False
    first = _orient(p, q, a, b)
    second = _orient(p, q, b, c)
    third = _orient(p, q, c, a)
    return (first > 0 and second > 0 and third > 0) or (first < 0 and second < 0 and third < 0)
