"""A small flat patch dropped onto the floor."""
SCENARIO_NAME = "drop"
SCENARIO_DURATION = 0.5

MESH_NX = 5
MESH_NY = 5
MESH_WIDTH = 0.2
MESH_HEIGHT = 0.2
MESH_ORIGIN = [-0.1, -0.1, 0.05]

COLLISION_SELF = False

OBSTACLES = {
    "floor": {"kind": "plane", "point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0], "mu": 0.3},
}
