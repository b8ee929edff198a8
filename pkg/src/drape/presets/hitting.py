"""A hanging DIN A2 sheet hit four times by a thin stick.

The sheet hangs from its two upper corners in the ``xz`` plane. The
stick is 75 cm long, slightly tilted, and pushes through the plane of
the sheet at a different height and depth for every hit.
"""
from typing import List

SCENARIO_NAME = "hitting"
SCENARIO_DURATION = 4.0

MESH_NX = 7
MESH_NY = 9
MESH_WIDTH = 0.42
MESH_HEIGHT = 0.594
MESH_PLANE = "xz"
MESH_ORIGIN = [-0.21, 0.0, 0.3]

MATERIAL_DENSITY = 0.1042

PINS_NODES = [56, 62]

STICK_RADIUS = 0.0075
STICK_FRICTION = 0.0

half_length = 0.375
retreat = -0.25


def _hit_waypoints() -> List[List[float]]:
    rows = []
    # start time, height, depth, tilt
    for start, height, depth, tilt in (
        (0.0, 0.75, 0.06, 0.03),
        (1.0, 0.55, 0.10, -0.02),
        (2.0, 0.45, 0.04, 0.05),
        (3.0, 0.65, 0.12, 0.0),
    ):
        for offset, y in ((0.05, retreat), (0.25, retreat), (0.5, depth), (0.8, retreat)):
            rows.append(
                [
                    start + offset,
                    -half_length,
                    y,
                    height - tilt,
                    half_length,
                    y,
                    height + tilt,
                ]
            )
    return rows


STICK_WAYPOINTS = _hit_waypoints()
