"""Folding a pair of shorts on a table by its two waist corners.

The shorts are swung forward and lowered so they land flat, then the
waist is lifted over them and dropped onto the leg loops.
"""
from pathlib import Path

SCENARIO_NAME = "shorts"
SCENARIO_DURATION = 2.0

MESH_TEMPLATE = str(Path(__file__).resolve().parent.parent / "assets" / "shorts.obj")
MESH_ORIGIN = [0.0, 0.0, 0.15]

MATERIAL_DENSITY = 0.3046
MATERIAL_THICKNESS = 0.002

# Waist corners of the template.
PINS_NODES = [15, 19]
PINS_WAYPOINTS = [
    [0.0, -0.2, 0.0, 0.45, 0.2, 0.0, 0.45],
    [0.3, -0.2, 0.15, 0.25, 0.2, 0.15, 0.25],
    [0.6, -0.2, 0.3, 0.02, 0.2, 0.3, 0.02],
    [1.1, -0.2, 0.15, 0.2, 0.2, 0.15, 0.2],
    [1.6, -0.2, 0.01, 0.06, 0.2, 0.01, 0.06],
]

OBSTACLES = {
    "table": {"kind": "plane", "point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0], "mu": 0.4},
}
