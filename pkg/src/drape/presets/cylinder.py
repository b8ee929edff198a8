"""A 130 cm square sheet falling onto an off-centre frictional cylinder.

The sheet is rotated 20 degrees about the vertical and its centre sits
30 cm away from the cylinder axis. With a low friction coefficient the
sheet slides off to the floor, with ``mu = 0.55`` it stays on top.
"""
SCENARIO_NAME = "cylinder"
SCENARIO_DURATION = 2.0

MESH_NX = 14
MESH_NY = 14
MESH_WIDTH = 1.3
MESH_HEIGHT = 1.3
MESH_ROTATION = 20.0
# Places the sheet centre at (0.3, 0, 0.55).
MESH_ORIGIN = [-0.0885, -0.8553, 0.55]

MATERIAL_DENSITY = 0.1042

OBSTACLES = {
    "cylinder": {
        "kind": "cylinder",
        "base": [0.0, 0.0, 0.0],
        "radius": 0.15,
        "height": 0.5,
        "mu": 0.55,
    },
    "floor": {"kind": "plane", "point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0], "mu": 0.4},
}
