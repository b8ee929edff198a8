"""A sheet falling onto the egg-crate needle field and resting on its peaks."""
SCENARIO_NAME = "needles"
SCENARIO_DURATION = 1.5

MESH_NX = 15
MESH_NY = 15
MESH_WIDTH = 0.8
MESH_HEIGHT = 0.8
# Peaks of the field sit at z = 1 / (c1 c2), about 0.667 m.
MESH_ORIGIN = [-0.4, -0.4, 0.72]

OBSTACLES = {
    "needles": {
        "kind": "needles",
        "c1": 20.0,
        "c2": 0.075,
        "origin": [0.0, 0.0, 0.0],
        "cusp_extent": [[-0.6, -0.6], [0.6, 0.6]],
        "mu": 0.3,
    },
}
