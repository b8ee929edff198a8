from __future__ import annotations

import csv
import os
import platform
import sys
from contextlib import contextmanager
from importlib.metadata import version
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, NoReturn, Optional, TypeVar

import click
from click.core import ParameterSource

from .collision import audit_intersections
from .exceptions import BenchmarkInvalid, ConfigurationError, StepFailure, ValidationError
from .logging import format_fields
from .mesh import lumped_mass
from .presets import PRESETS
from .qp import SOLVERS
from .recording import (
    default_markers,
    FrameRecorder,
    make_synthetic_reference,
    ReferenceTrace,
    Trace,
)
from .scenario import ScenarioConfig
from .signals import omega_reduced, step_finished
from .simulation import Simulation
from .validation import bench_solvers, error_metrics, fit_parameters, load_grid

F = TypeVar("F", bound=Callable[..., Any])

EXIT_STEP_FAILURE = 3
EXIT_BENCHMARK_INVALID = 4


def get_version(ctx: Any, param: Any, value: Any) -> None:
    if not value or ctx.resilient_parsing:
        return

    click.echo(
        f"Python {platform.python_version()}\n"
        f"drape {version('drape')}\n"
        f"numpy {version('numpy')}\n"
        f"scipy {version('scipy')}",
        color=ctx.color,
    )
    ctx.exit()


def _set_debug(ctx: click.Context, param: click.Parameter, value: bool) -> Optional[bool]:
    # Leave debug to the environment unless the flag is given.
    source = ctx.get_parameter_source(param.name)  # type: ignore[arg-type]
    if source is not None and source in (ParameterSource.DEFAULT, ParameterSource.DEFAULT_MAP):
        return None

    os.environ["DRAPE_DEBUG"] = "1" if value else "0"
    return value


def load_dotenv(path: str) -> bool:
    """Load environment variables from *path*, existing ones win."""
    import dotenv

    if os.path.isfile(path):
        return dotenv.load_dotenv(path, encoding="utf-8")
    return False


def _env_file_callback(
    ctx: click.Context, param: click.Parameter, value: Optional[str]
) -> Optional[str]:
    if value is None:
        return None

    try:
        import dotenv  # noqa: F401
    except ImportError:
        raise click.BadParameter(
            "python-dotenv must be installed to load an env file.",
            ctx=ctx,
            param=param,
        ) from None

    load_dotenv(value)
    return value


def scenario_options(function: F) -> F:
    """Options shared by the commands that run a scenario."""
    options = [
        click.option(
            "--solver", type=click.Choice(sorted(SOLVERS)), help="Quadratic program solver."
        ),
        click.option("--omega", type=float, help="Proximity parameter in [0, 0.5)."),
        click.option("--thickness", type=float, help="Collision thickness in metres."),
        click.option("--seed", type=int, help="Seed of the random generators."),
    ]
    for option in reversed(options):
        function = option(function)
    return function


def make_simulation(
    source: str,
    solver: Optional[str] = None,
    omega: Optional[float] = None,
    thickness: Optional[float] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> Simulation:
    """Layer preset or file, ``DRAPE_*`` variables and flags, later wins."""
    simulation = Simulation()
    try:
        simulation.load_scenario(source)
        simulation.config.from_prefixed_env()
    except ConfigurationError as error:
        raise click.UsageError(str(error)) from None
    except OSError as error:
        raise click.UsageError(f"Cannot read {source!r}: {error}") from None

    overrides: Dict[str, Any] = {
        "SOLVER_KIND": solver,
        "COLLISION_OMEGA": omega,
        "MATERIAL_THICKNESS": thickness,
        "SCENARIO_SEED": seed,
        "OUTPUT_DIR": out_dir,
    }
    simulation.config.from_mapping(
        {key: value for key, value in overrides.items() if value is not None}
    )
    return simulation


def _scenario(simulation: Simulation) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_config(simulation.config)
    except ConfigurationError as error:
        raise click.UsageError(str(error)) from None


@contextmanager
def diagnostics(simulation: Simulation) -> Iterator[None]:
    """Log step and proximity diagnostics of the run as key=value lines."""
    logger = simulation.logger

    def _on_step(sender: Any, state: Any, report: Any) -> None:
        logger.debug(
            "step %s",
            format_fields(
                time=report.time,
                iterations=report.iterations,
                max_inext=report.max_inext,
                exchanges=report.exchanges,
            ),
        )

    def _on_omega(sender: Any, omega: float, crossings: int) -> None:
        logger.info("proximity reduced %s", format_fields(omega=omega, crossings=crossings))

    with step_finished.connected_to(_on_step), omega_reduced.connected_to(_on_omega):
        yield


def _fail_step(error: StepFailure) -> NoReturn:
    click.echo(f"Error: {error} (frame {error.frame})", err=True)
    sys.exit(EXIT_STEP_FAILURE)


def _run(simulation: Simulation, scenario: ScenarioConfig) -> Trace:
    try:
        return simulation.run(scenario)
    except ConfigurationError as error:
        raise click.UsageError(str(error)) from None
    except StepFailure as error:
        _fail_step(error)


def _reference(path: str) -> ReferenceTrace:
    try:
        return ReferenceTrace.load(path)
    except (ValidationError, OSError, KeyError, ValueError) as error:
        raise click.UsageError(f"Unreadable reference {path!r}: {error}") from None


@click.group()
@click.option(
    "--version",
    help="Show the drape version",
    expose_value=False,
    callback=get_version,
    is_flag=True,
    is_eager=True,
)
@click.option(
    "--debug/--no-debug",
    help="Log every step.",
    expose_value=False,
    callback=_set_debug,
)
@click.option(
    "-e",
    "--env-file",
    type=click.Path(exists=True, dir_okay=False),
    help="Load environment variables from this file. python-dotenv must be installed.",
    is_eager=True,
    expose_value=False,
    callback=_env_file_callback,
)
def cli() -> None:
    pass


@cli.command("simulate", short_help="Run a scenario and record its frames.")
@click.argument("source")
@scenario_options
@click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory.")
def simulate_command(source: str, out_dir: Optional[str], **options: Any) -> None:
    """Run SOURCE, a scenario file or one of the built-in presets."""
    simulation = make_simulation(source, out_dir=out_dir, **options)
    scenario = _scenario(simulation)
    directory = scenario.output.directory
    mesh = scenario.mesh.build()
    recorder = FrameRecorder(directory, mesh, scenario.output.obj, scenario.output.every)
    with recorder.attached(simulation), diagnostics(simulation):
        trace = _run(simulation, scenario)

    crossings = audit_intersections(mesh, trace.final().reshape(-1))
    click.echo(f"Frames: {trace.n_frames}")
    click.echo(f"Output: {directory}")
    click.echo(f"Self-intersections in final state: {len(crossings)}")
    click.echo(f"Quotient q: {trace.quotient:.4f}")


@cli.command("validate", short_help="Compare a scenario with a reference trace.")
@click.argument("source")
@click.argument("reference", type=click.Path(exists=True, file_okay=False))
@scenario_options
@click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory.")
def validate_command(source: str, reference: str, out_dir: Optional[str], **options: Any) -> None:
    """Run SOURCE and report its errors against the REFERENCE directory."""
    simulation = make_simulation(source, out_dir=out_dir, **options)
    scenario = _scenario(simulation)
    recorded = _reference(reference)
    trace = _run(simulation, scenario)

    mass = lumped_mass(scenario.mesh.build(), scenario.material.density)
    try:
        metrics = error_metrics(trace, recorded, mass)
        normalized = error_metrics(trace, recorded, mass, normalized=True)
    except ValidationError as error:
        raise click.UsageError(str(error)) from None
    directory = scenario.output.directory
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "errors.csv", "w", newline="") as file_:
        writer = csv.writer(file_)
        writer.writerow(("frame", "time", "error", "deviation"))
        for frame, error, deviation in metrics.rows():
            writer.writerow((frame, frame * scenario.step.dt, error, deviation))
    click.echo(f"Mean error: {metrics.mean:.6g}")
    click.echo(f"Mean error (cm): {100.0 * normalized.mean:.4f}")


@cli.command("fit", short_help="Grid search the material and friction parameters.")
@click.argument("source")
@click.argument("reference", type=click.Path(exists=True, file_okay=False))
@click.argument("grid", type=click.Path(exists=True, dir_okay=False))
@scenario_options
@click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--workers", type=int, default=None, help="Worker processes, all cores by default.")
def fit_command(
    source: str,
    reference: str,
    grid: str,
    out_dir: Optional[str],
    workers: Optional[int],
    **options: Any,
) -> None:
    """Fit SOURCE to the REFERENCE directory over the GRID file."""
    simulation = make_simulation(source, out_dir=out_dir, **options)
    scenario = _scenario(simulation)
    try:
        axes = load_grid(grid)
    except ConfigurationError as error:
        raise click.UsageError(str(error)) from None
    result = fit_parameters(simulation.config, _reference(reference), axes, workers)

    directory = scenario.output.directory
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "surface.csv", "w", newline="") as file_:
        writer = csv.writer(file_)
        writer.writerow((*result.axes, "error"))
        for point, error in zip(result.points, result.errors.tolist()):
            writer.writerow((*(point[axis] for axis in result.axes), error))
    best = " ".join(f"{axis}={value:g}" for axis, value in result.best.items())
    click.echo(f"Best: {best} error={result.best_error:.6g}")
    if len(result.ties) > 1:
        click.echo(f"Tied grid points: {', '.join(str(index) for index in result.ties)}")


@cli.command("bench", short_help="Compare the wall clock of both solvers.")
@click.argument("source")
@scenario_options
@click.option("--repeats", type=int, default=3, show_default=True, help="Timed runs per solver.")
def bench_command(source: str, repeats: int, **options: Any) -> None:
    """Time SOURCE under the active-set and the interior point solver."""
    simulation = make_simulation(source, **options)
    _scenario(simulation)
    try:
        result = bench_solvers(simulation.config, repeats)
    except StepFailure as error:
        _fail_step(error)
    except BenchmarkInvalid as error:
        click.echo(f"Error: benchmark invalid, {error}", err=True)
        sys.exit(EXIT_BENCHMARK_INVALID)

    for solver, quotient in sorted(result.quotients.items()):
        click.echo(f"{solver}: q={quotient:.4f}")
    click.echo(f"Ratio interior-point/active-set: {result.ratio:.3f}")


@cli.command("synthesize", short_help="Write a reference trace from a scenario run.")
@click.argument("source")
@click.argument("out", type=click.Path(file_okay=False))
@scenario_options
@click.option("--noise", type=float, default=0.0, show_default=True, help="Noise in metres.")
@click.option("--dropout", type=float, default=0.0, show_default=True, help="Hidden fraction.")
def synthesize_command(
    source: str, out: str, noise: float, dropout: float, **options: Any
) -> None:
    """Run SOURCE and sample its markers into the OUT directory."""
    if noise < 0 or not 0.0 <= dropout < 1.0:
        raise click.UsageError("--noise must be non-negative and --dropout lie in [0, 1)")
    simulation = make_simulation(source, **options)
    scenario = _scenario(simulation)
    trace = _run(simulation, scenario)

    markers = default_markers(scenario.mesh.build())
    reference = make_synthetic_reference(trace, markers, noise, dropout, scenario.seed)
    path = reference.save(Path(out))
    click.echo(f"Reference with {reference.n_markers} markers written to {path}")


cli.help = f"""\
Constrained cloth simulation with contact and friction.

SOURCE is a scenario file or one of the presets {', '.join(PRESETS)}.
Settings are layered: defaults, then SOURCE, then DRAPE_* environment
variables, then the command line flags.
"""


def main() -> None:
    cli.main()


if __name__ == "__main__":
    main()
