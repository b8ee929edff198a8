"""A 190 cm sheet wrapping a 35 cm sphere that turns half a revolution."""
import math

SCENARIO_NAME = "sphere"
SCENARIO_DURATION = 2.5

MESH_NX = 15
MESH_NY = 15
MESH_WIDTH = 1.9
MESH_HEIGHT = 1.9
MESH_ORIGIN = [-0.95, -0.95, 0.75]

OBSTACLES = {
    "sphere": {
        "kind": "sphere",
        "center": [0.0, 0.0, 0.35],
        "radius": 0.35,
        "mu": 0.5,
        "spin": {"axis": [0.0, 0.0, 1.0], "rate": math.pi, "start": 1.0, "end": 2.0},
    },
    "floor": {"kind": "plane", "point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0], "mu": 0.4},
}
