"""Comparison against reference traces, parameter fitting and benchmarks."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from logging import getLogger
from statistics import median
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .exceptions import BenchmarkInvalid, ConfigurationError, DrapeError, ValidationError
from .logging import format_fields
from .mesh import lumped_mass, MassMatrix
from .qp import SOLVERS
from .recording import ReferenceTrace, Trace
from .scenario import ScenarioConfig
from .signals import qp_solved
from .simulation import run_scenario
from .typing import FilePath, FloatArray, IndexArray
from .utils import file_path_to_path

log = getLogger(__name__)

#: Grid axes and the configuration keys they set.
GRID_KEYS = {
    "damping": "MATERIAL_DAMPING",
    "virtual_mass": "MATERIAL_VIRTUAL_MASS",
    "friction": None,
}

BENCH_TOLERANCE = 1e-6


@dataclass
class ErrorMetrics:
    """Per frame errors of a trace against a reference.

    ``errors`` is the mass weighted norm of the marker residuals and
    ``deviations`` the spread of the per marker distances, both ``nan``
    on frames without a visible marker.
    """

    frames: IndexArray
    errors: FloatArray
    deviations: FloatArray
    mean: float
    normalized: bool = False

    def rows(self) -> Iterator[Tuple[int, float, float]]:
        for frame, error, deviation in zip(
            self.frames.tolist(), self.errors.tolist(), self.deviations.tolist()
        ):
            yield frame, error, deviation


def error_metrics(
    trace: Trace, reference: ReferenceTrace, mass: MassMatrix, normalized: bool = False
) -> ErrorMetrics:
    """Compare the marker nodes of *trace* with *reference*, frame by frame.

    Only visible samples contribute. The weights are the node masses of
    the markers, divided by their total when *normalized* so the error
    reads as a length. Reference frames beyond the trace are ignored.

    Raises:
        ValidationError: If no frame holds a visible sample.
    """
    if reference.n_markers == 0:
        raise ValidationError("Reference has no markers")
    if reference.markers.max() >= mass.node_masses.shape[0] or reference.markers.min() < 0:
        raise ValidationError("Reference markers lie outside the mesh")
    masses = mass.node_masses[reference.markers]
    weights = masses / masses.sum() if normalized else masses

    usable = (reference.frames >= 0) & (reference.frames < trace.n_frames)
    frames = reference.frames[usable]
    visible = reference.visible[usable]
    present = visible.any(axis=1)
    if not np.any(present):
        raise ValidationError("Trace and reference share no visible sample")

    simulated = trace.positions.reshape(trace.n_frames, -1, 3)[frames][:, reference.markers]
    distances = np.linalg.norm(simulated - reference.positions[usable], axis=2)
    distances = np.where(visible, distances, 0.0)

    errors = np.sqrt((weights * distances**2).sum(axis=1))
    counts = np.maximum(visible.sum(axis=1), 1)
    means = distances.sum(axis=1) / counts
    spread = np.where(visible, distances - means[:, None], 0.0)
    deviations = np.sqrt((spread**2).sum(axis=1) / counts)

    errors[~present] = np.nan
    deviations[~present] = np.nan
    return ErrorMetrics(frames, errors, deviations, float(errors[present].mean()), normalized)


def load_grid(path: FilePath) -> Dict[str, List[float]]:
    """Read the ``[grid]`` section of a cfg file, one JSON list per axis."""
    path = file_path_to_path(path).resolve()
    config = Config(path.parent)
    try:
        config.from_pyfile(path.name)
    except FileNotFoundError:
        raise ConfigurationError(f"Grid file {str(path)!r} does not exist") from None
    grid = config.get_namespace("GRID_")
    return validate_grid(grid)


def validate_grid(grid: Mapping[str, Any]) -> Dict[str, List[float]]:
    unknown = sorted(set(grid) - set(GRID_KEYS))
    if unknown:
        raise ConfigurationError(f"Unknown grid axes: {', '.join(unknown)}")
    result: Dict[str, List[float]] = {}
    for axis, values in grid.items():
        if isinstance(values, (int, float)):
            values = [values]
        try:
            values = [float(value) for value in values]
        except (TypeError, ValueError):
            raise ConfigurationError(f"Grid axis {axis!r} must be a list of numbers") from None
        if not values or not all(math.isfinite(value) for value in values):
            raise ConfigurationError(f"Grid axis {axis!r} must hold finite values")
        if axis == "virtual_mass" and min(values) <= -1.0:
            raise ConfigurationError("Virtual mass must stay above -1")
        if axis != "virtual_mass" and min(values) < 0:
            raise ConfigurationError(f"Grid axis {axis!r} must be non-negative")
        result[axis] = values
    if not result:
        raise ConfigurationError("The grid has no axis")
    return result


def apply_parameters(config: Config, parameters: Mapping[str, float]) -> Config:
    """Copy of *config* with grid *parameters* set.

    Friction is the Coulomb coefficient of every obstacle, the stick
    included.
    """
    config = config.copy()
    for axis, value in parameters.items():
        key = GRID_KEYS[axis]
        if key is not None:
            config[key] = value
            continue
        for params in (config.get("OBSTACLES") or {}).values():
            params["mu"] = value
        config["STICK_FRICTION"] = value
    return config


def _evaluate(config: Config, reference: ReferenceTrace) -> float:
    try:
        scenario = ScenarioConfig.from_config(config)
        trace = run_scenario(scenario)
        mass = lumped_mass(scenario.mesh.build(), scenario.material.density)
        return error_metrics(trace, reference, mass).mean
    except (DrapeError, ArithmeticError, ValueError) as error:
        log.warning("grid point failed %s", format_fields(error=type(error).__name__))
        return math.inf


@dataclass
class FitResult:
    axes: Tuple[str, ...]
    points: List[Dict[str, float]]
    errors: FloatArray
    best_index: int
    ties: List[int] = field(default_factory=list)

    @property
    def best(self) -> Dict[str, float]:
        return self.points[self.best_index]

    @property
    def best_error(self) -> float:
        return float(self.errors[self.best_index])


def fit_parameters(
    config: Config,
    reference: ReferenceTrace,
    grid: Mapping[str, Sequence[float]],
    workers: Optional[int] = None,
) -> FitResult:
    """Evaluate every point of *grid* and pick the lowest mean error.

    Points run in a process pool unless *workers* is 1. A point whose
    simulation fails scores an infinite error. Equal errors resolve to
    the first point in grid order, every tied point is reported.
    """
    grid = validate_grid(grid)
    config.validate()
    axes = tuple(axis for axis in GRID_KEYS if axis in grid)
    points = [dict(zip(axes, values)) for values in itertools.product(*(grid[a] for a in axes))]
    configs = [apply_parameters(config, point) for point in points]
    log.info("fitting %s", format_fields(points=len(points), workers=workers or "auto"))

    if workers == 1 or len(points) == 1:
        errors = [_evaluate(point_config, reference) for point_config in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            errors = list(executor.map(_evaluate, configs, itertools.repeat(reference)))

    values = np.asarray(errors, dtype=float)
    best_index = int(np.argmin(values))
    ties = [int(index) for index in np.flatnonzero(values == values[best_index])]
    if not math.isfinite(values[best_index]):
        log.warning("every grid point failed")
    elif len(ties) > 1:
        log.info("tied grid points %s", format_fields(points=ties, chosen=best_index))
    return FitResult(axes, points, values, best_index, ties)


@dataclass
class BenchmarkResult:
    quotients: Dict[str, float]
    runs: Dict[str, List[float]]
    deviation: float
    solves: Dict[str, int] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        """Interior point over active set wall clock."""
        return self.quotients["interior-point"] / self.quotients["active-set"]


def max_node_deviation(first: Trace, second: Trace) -> float:
    if first.positions.shape != second.positions.shape:
        return math.inf
    difference = (first.positions - second.positions).reshape(first.n_frames, -1, 3)
    return float(np.linalg.norm(difference, axis=2).max(initial=0.0))


def bench_solvers(
    config: Config, repeats: int = 3, tolerance: float = BENCH_TOLERANCE
) -> BenchmarkResult:
    """Time the scenario under both solvers, runs strictly in sequence.

    Each solver gets one warm-up run and *repeats* timed runs; the
    quotient is the median wall clock of the stepping divided by the
    simulated duration.

    Raises:
        BenchmarkInvalid: If the trajectories differ by more than
            *tolerance* at any node of any frame, or the contact rows
            active at the end of the run differ.
    """
    if repeats < 1:
        raise ConfigurationError("At least one timed repetition is required")
    quotients: Dict[str, float] = {}
    runs: Dict[str, List[float]] = {}
    traces: Dict[str, Trace] = {}
    solves: Dict[str, int] = {}

    for solver in sorted(SOLVERS):
        solver_config = config.copy()
        solver_config["SOLVER_KIND"] = solver
        scenario = ScenarioConfig.from_config(solver_config)
        counter = {"solves": 0, "iterations": 0}

        def _count(sender: Any, stats: Any) -> None:
            counter["solves"] += 1
            counter["iterations"] += stats.iterations

        traces[solver] = run_scenario(scenario)
        with qp_solved.connected_to(_count):
            timings = [run_scenario(scenario).sim_time for _ in range(repeats)]
        runs[solver] = timings
        quotients[solver] = median(timings) / scenario.duration
        solves[solver] = counter["solves"] // repeats
        log.info(
            "benchmarked %s",
            format_fields(
                solver=solver,
                quotient=quotients[solver],
                solves=solves[solver],
                iterations=counter["iterations"] // repeats,
            ),
        )

    deviation = max_node_deviation(traces["active-set"], traces["interior-point"])
    if deviation > tolerance:
        raise BenchmarkInvalid(
            f"Solvers disagree by {deviation:.3g} m, more than {tolerance:.3g} m", deviation
        )
    differing = traces["active-set"].active_keys ^ traces["interior-point"].active_keys
    if differing:
        listed = ", ".join(sorted(repr(key) for key in differing)[:5])
        raise BenchmarkInvalid(
            f"Solvers end with different active contacts ({len(differing)} differ: {listed})",
            deviation,
        )
    return BenchmarkResult(quotients, runs, deviation, solves)
