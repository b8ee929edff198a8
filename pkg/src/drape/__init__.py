from __future__ import annotations

from .config import Config as Config
from .exceptions import (
    BenchmarkInvalid as BenchmarkInvalid,
    ConfigurationError as ConfigurationError,
    DrapeError as DrapeError,
    StepFailure as StepFailure,
    ValidationError as ValidationError,
)
from .mesh import (
    build_mesh as build_mesh,
    ClothMesh as ClothMesh,
    ClothState as ClothState,
    load_obj as load_obj,
    lumped_mass as lumped_mass,
    MassMatrix as MassMatrix,
)
from .recording import ReferenceTrace as ReferenceTrace, Trace as Trace
from .scenario import build_scene as build_scene, ScenarioConfig as ScenarioConfig
from .signals import (
    frame_recorded as frame_recorded,
    omega_reduced as omega_reduced,
    qp_solved as qp_solved,
    step_finished as step_finished,
)
from .simulation import run_scenario as run_scenario, Simulation as Simulation
from .stepper import Stepper as Stepper, StepReport as StepReport
from .validation import (
    bench_solvers as bench_solvers,
    error_metrics as error_metrics,
    fit_parameters as fit_parameters,
)
