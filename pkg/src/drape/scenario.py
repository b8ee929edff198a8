"""Typed, validated view of a scenario configuration and its scene."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .exceptions import ConfigurationError
from .mesh import build_mesh, ClothMesh, ClothState, load_obj, lumped_mass
from .obstacles import build_obstacle, CuspSet, needle_cusps, NeedleField, StickObstacle
from .qp import SOLVERS
from .stepper import PinSet, Scene, StepConfig
from .utils import resolve_asset


@dataclass(frozen=True)
class MeshSpec:
    nx: int = 7
    ny: int = 9
    width: float = 0.42
    height: float = 0.594
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    plane: str = "xy"
    rotation: float = 0.0
    template: Optional[Path] = None

    def build(self) -> ClothMesh:
        if self.template is not None:
            return load_obj(self.template, self.origin, self.rotation)
        return build_mesh(
            self.nx, self.ny, self.width, self.height, self.origin, self.plane, self.rotation
        )


@dataclass(frozen=True)
class MaterialSpec:
    density: float = 0.1042
    damping: float = 0.0
    virtual_mass: float = 0.0
    thickness: float = 0.002
    self_friction: float = 0.0


@dataclass(frozen=True)
class PinSpec:
    nodes: Tuple[int, ...] = ()
    waypoints: Optional[Tuple[Tuple[float, ...], ...]] = None
    trajectory: Optional[Path] = None


@dataclass(frozen=True)
class StickSpec:
    trajectory: Optional[Path] = None
    waypoints: Optional[Tuple[Tuple[float, ...], ...]] = None
    radius: float = 0.0075
    segments: int = 8
    friction: float = 0.0


@dataclass(frozen=True)
class OutputSpec:
    directory: Path = Path("output")
    obj: bool = False
    every: int = 1


@dataclass
class ScenarioConfig:
    name: str
    duration: float
    seed: int
    mesh: MeshSpec
    material: MaterialSpec
    step: StepConfig
    solver: str
    obstacles: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    pins: PinSpec = field(default_factory=PinSpec)
    stick: Optional[StickSpec] = None
    output: OutputSpec = field(default_factory=OutputSpec)
    debug: bool = False

    @property
    def n_frames(self) -> int:
        """Number of recorded states, the initial one included."""
        return int(round(self.duration / self.step.dt)) + 1

    @classmethod
    def from_config(cls, config: Config) -> "ScenarioConfig":
        """Validate *config* and convert it into typed specs.

        Raises:
            ConfigurationError: For unknown keys, invalid values or
                missing referenced files.
        """
        config.validate()
        root = config.root_path

        def _asset(value: Any) -> Optional[Path]:
            if value in (None, ""):
                return None
            path = resolve_asset(value, root)
            if not path.is_file():
                raise ConfigurationError(f"Referenced file {str(path)!r} does not exist")
            return path

        def _rows(value: Any) -> Optional[Tuple[Tuple[float, ...], ...]]:
            if value is None:
                return None
            try:
                return tuple(tuple(float(item) for item in row) for row in value)
            except (TypeError, ValueError) as error:
                raise ConfigurationError(f"Waypoints must be lists of numbers: {error}") from error

        try:
            mesh = MeshSpec(
                nx=int(config["MESH_NX"]),
                ny=int(config["MESH_NY"]),
                width=float(config["MESH_WIDTH"]),
                height=float(config["MESH_HEIGHT"]),
                origin=_vector(config["MESH_ORIGIN"], "MESH_ORIGIN"),
                plane=str(config["MESH_PLANE"]),
                rotation=float(config["MESH_ROTATION"]),
                template=_asset(config["MESH_TEMPLATE"]),
            )
            material = MaterialSpec(
                density=float(config["MATERIAL_DENSITY"]),
                damping=float(config["MATERIAL_DAMPING"]),
                virtual_mass=float(config["MATERIAL_VIRTUAL_MASS"]),
                thickness=float(config["MATERIAL_THICKNESS"]),
                self_friction=float(config["MATERIAL_SELF_FRICTION"]),
            )
            pins = PinSpec(
                nodes=tuple(int(node) for node in config["PINS_NODES"] or ()),
                waypoints=_rows(config["PINS_WAYPOINTS"]),
                trajectory=_asset(config["PINS_TRAJECTORY"]),
            )
            stick = None
            if config["STICK_TRAJECTORY"] or config["STICK_WAYPOINTS"]:
                stick = StickSpec(
                    trajectory=_asset(config["STICK_TRAJECTORY"]),
                    waypoints=_rows(config["STICK_WAYPOINTS"]),
                    radius=float(config["STICK_RADIUS"]),
                    segments=int(config["STICK_SEGMENTS"]),
                    friction=float(config["STICK_FRICTION"]),
                )
            output = OutputSpec(
                directory=resolve_asset(config["OUTPUT_DIR"], None),
                obj=bool(config["OUTPUT_OBJ"]),
                every=int(config["OUTPUT_EVERY"]),
            )
            duration = float(config["SCENARIO_DURATION"])
            seed = int(config["SCENARIO_SEED"])
            step = StepConfig.from_config(config)
        except (TypeError, ValueError) as error:
            raise ConfigurationError(f"Invalid configuration value: {error}") from error

        if mesh.template is None and (mesh.nx < 2 or mesh.ny < 2):
            raise ConfigurationError("Grid needs at least 2x2 nodes")
        if mesh.width <= 0 or mesh.height <= 0:
            raise ConfigurationError("Cloth dimensions must be positive")
        if material.density <= 0:
            raise ConfigurationError("Density must be positive")
        if duration <= 0:
            raise ConfigurationError("Duration must be positive")
        if output.every < 1:
            raise ConfigurationError("OUTPUT_EVERY must be at least 1")
        if pins.waypoints is not None and pins.trajectory is not None:
            raise ConfigurationError("Give pin waypoints or a pin trajectory file, not both")
        if stick is not None and stick.waypoints is not None and stick.trajectory is not None:
            raise ConfigurationError("Give stick waypoints or a stick trajectory file, not both")
        solver = str(config["SOLVER_KIND"])
        if solver not in SOLVERS:
            raise ConfigurationError(
                f"Unknown solver {solver!r}, expected one of {', '.join(sorted(SOLVERS))}"
            )

        obstacles = {
            str(name): {str(key).lower(): value for key, value in params.items()}
            for name, params in dict(config["OBSTACLES"] or {}).items()
        }
        for name, params in obstacles.items():
            build_obstacle(name, params)
            if "cusp_extent" in params:
                _extent(params["cusp_extent"], name)

        return cls(
            name=str(config["SCENARIO_NAME"]),
            duration=duration,
            seed=seed,
            mesh=mesh,
            material=material,
            step=step,
            solver=solver,
            obstacles=obstacles,
            pins=pins,
            stick=stick,
            output=output,
            debug=bool(config["DEBUG"]),
        )


def _vector(value: Any, key: str) -> Tuple[float, float, float]:
    try:
        x, y, z = (float(item) for item in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key} must be a list of three numbers") from None
    return x, y, z


def _extent(value: Any, name: str) -> Tuple[Sequence[float], Sequence[float]]:
    try:
        lower, upper = ([float(item) for item in corner[:2]] for corner in value)
    except (TypeError, ValueError):
        raise ConfigurationError(
            f"Obstacle {name!r}: cusp_extent must be [[x0, y0], [x1, y1]]"
        ) from None
    if lower[0] > upper[0] or lower[1] > upper[1]:
        raise ConfigurationError(f"Obstacle {name!r}: cusp_extent corners are reversed")
    return lower, upper


def build_scene(scenario: ScenarioConfig) -> Tuple[Scene, ClothState]:
    """Instantiate the mesh, masses, obstacles and scripted motion."""
    mesh = scenario.mesh.build()
    mass = lumped_mass(mesh, scenario.material.density)

    obstacles = []
    cusp_points: List[np.ndarray] = []
    cusp_mu = 0.0
    for name, params in sorted(scenario.obstacles.items()):
        obstacle = build_obstacle(name, params)
        obstacles.append(obstacle)
        if isinstance(obstacle, NeedleField) and "cusp_extent" in params:
            lower, upper = _extent(params["cusp_extent"], name)
            cusp_points.append(needle_cusps(obstacle, lower, upper).points)
            cusp_mu = max(cusp_mu, obstacle.mu)
    cusps = CuspSet(np.concatenate(cusp_points)) if cusp_points else None

    pins = None
    if scenario.pins.nodes:
        if max(scenario.pins.nodes) >= mesh.n_nodes or min(scenario.pins.nodes) < 0:
            raise ConfigurationError("Pinned node outside the mesh")
        if scenario.pins.trajectory is not None:
            pins = PinSet.from_csv(scenario.pins.nodes, scenario.pins.trajectory)
        elif scenario.pins.waypoints is not None:
            pins = PinSet.from_waypoints(scenario.pins.nodes, scenario.pins.waypoints)
        else:
            pins = PinSet.fixed(scenario.pins.nodes, mesh.rest_positions)

    stick = None
    spec = scenario.stick
    if spec is not None:
        options = dict(radius=spec.radius, segments=spec.segments, mu=spec.friction)
        if spec.trajectory is not None:
            stick = StickObstacle.from_csv(spec.trajectory, **options)
        else:
            stick = StickObstacle.from_waypoints(spec.waypoints or (), **options)

    scene = Scene(mesh, mass, obstacles, pins, stick, cusps, cusp_mu)
    return scene, ClothState.at_rest(mesh)
