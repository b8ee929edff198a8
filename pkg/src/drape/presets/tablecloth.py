"""Laying a DIN A2 sheet onto a table by its two upper corners.

The sheet starts hanging beside the table edge with its corners 10 cm
above the top and is dragged over the table until about half of it
rests there. The table is a flat disc whose edge passes through the
origin.
"""
SCENARIO_NAME = "tablecloth"
SCENARIO_DURATION = 4.0

MESH_NX = 7
MESH_NY = 9
MESH_WIDTH = 0.42
MESH_HEIGHT = 0.594
MESH_PLANE = "xz"
MESH_ROTATION = 90.0
MESH_ORIGIN = [-0.05, -0.21, -0.494]

MATERIAL_DENSITY = 0.1042

# Upper corners of the 7x9 grid.
PINS_NODES = [56, 62]
PINS_WAYPOINTS = [
    [0.0, -0.05, -0.21, 0.1, -0.05, 0.21, 0.1],
    [1.0, 0.0, -0.21, 0.15, 0.0, 0.21, 0.15],
    [2.5, 0.3, -0.21, 0.02, 0.3, 0.21, 0.02],
    [3.0, 0.3, -0.21, 0.005, 0.3, 0.21, 0.005],
]

OBSTACLES = {
    "table": {
        "kind": "cylinder",
        "base": [0.6, 0.0, -0.05],
        "radius": 0.6,
        "height": 0.05,
        "mu": 0.4,
    },
}
