from __future__ import annotations

import os
import time
from logging import Logger
from typing import Dict, List, Optional, Union

import numpy as np

from .config import Config, ConfigAttribute, DEFAULT_CONFIG
from .exceptions import ConfigurationError, StepFailure
from .logging import create_logger, format_fields
from .mesh import ClothState
from .presets import preset_module, PRESETS
from .qp import make_solver
from .recording import Trace
from .scenario import build_scene, ScenarioConfig
from .signals import frame_recorded
from .stepper import Scene, Stepper
from .typing import FilePath
from .utils import file_path_to_path, get_debug_flag


class Simulation:
    """A scenario run, configured through :attr:`config`.

    Load a scenario into the configuration and run it,

    .. code-block:: python

        simulation = Simulation()
        simulation.load_scenario("cylinder")
        simulation.config["OBSTACLES"]["cylinder"]["mu"] = 0.2
        trace = simulation.run()

    Every recorded frame is announced on the ``frame_recorded`` signal
    with the simulation as sender.

    Arguments:
        name: Name of the logger, the ``drape.*`` library loggers are
            its children with the default.
        root_path: Directory relative asset paths are resolved against,
            the working directory by default.
    """

    config_class = Config
    debug = ConfigAttribute("DEBUG")
    dt = ConfigAttribute("STEP_DT", float)
    solver_kind = ConfigAttribute("SOLVER_KIND")

    def __init__(self, name: str = "drape", root_path: Optional[FilePath] = None) -> None:
        self.name = name
        self.root_path = file_path_to_path(root_path if root_path is not None else os.getcwd())
        self.config = self.make_config()
        self.scene: Optional[Scene] = None
        self.state: Optional[ClothState] = None
        self._logger: Optional[Logger] = None

    @classmethod
    def from_config(cls, config: Config, name: str = "drape") -> "Simulation":
        simulation = cls(name, config.root_path)
        simulation.config = config.copy()
        return simulation

    @property
    def logger(self) -> Logger:
        """A :class:`logging.Logger` for the simulation."""
        if self._logger is None:
            self._logger = create_logger(self)
        return self._logger

    def make_config(self) -> Config:
        config = self.config_class(self.root_path, DEFAULT_CONFIG)
        config["DEBUG"] = get_debug_flag()
        config["OBSTACLES"] = {}
        return config

    def load_scenario(self, source: FilePath) -> None:
        """Load a built-in preset by name or a cfg or py scenario file.

        Relative paths inside a scenario file are resolved against the
        directory of the file.
        """
        if isinstance(source, str) and source in PRESETS:
            self.config.from_object(preset_module(source))
            # detach the obstacle mappings from the preset module
            self.config = self.config.copy()
            return
        path = file_path_to_path(source)
        if not path.is_file():
            raise ConfigurationError(
                f"{str(source)!r} is neither a scenario file nor one of {', '.join(PRESETS)}"
            )
        path = path.resolve()
        self.root_path = path.parent
        self.config.root_path = path.parent
        self.config.from_pyfile(path.name)

    def run(self, scenario: Optional[ScenarioConfig] = None) -> Trace:
        """Run the scenario and return its trace.

        Only the stepping is timed, announcing frames is not.

        Raises:
            StepFailure: With the failing frame and the partial trace
                attached.
        """
        if scenario is None:
            scenario = ScenarioConfig.from_config(self.config)
        scene, state = build_scene(scenario)
        stepper = Stepper(scene, scenario.step, make_solver(scenario.solver))
        self.scene = scene
        dt = scenario.step.dt
        n_frames = scenario.n_frames

        positions = np.empty((n_frames, state.positions.shape[0]))
        positions[0] = state.positions
        reports: List[Dict[str, object]] = []
        frame_recorded.send(self, index=0, time=state.time, positions=state.positions, report=None)
        self.logger.info(
            "running %s",
            format_fields(
                scenario=scenario.name,
                nodes=scene.mesh.n_nodes,
                quads=scene.mesh.n_quads,
                steps=n_frames - 1,
                solver=scenario.solver,
            ),
        )

        elapsed = 0.0
        for index in range(1, n_frames):
            started = time.perf_counter()
            try:
                state, report = stepper.step(state)
            except StepFailure as error:
                elapsed += time.perf_counter() - started
                error.frame = index
                error.trace = Trace(
                    scenario.name,
                    dt,
                    positions[:index].copy(),
                    reports,
                    elapsed,
                    dt * (index - 1),
                )
                self.state = state
                self.logger.error("step failed %s", format_fields(frame=index, time=index * dt))
                raise
            elapsed += time.perf_counter() - started
            positions[index] = state.positions
            reports.append(report.digest())
            frame_recorded.send(
                self, index=index, time=state.time, positions=state.positions, report=report
            )
            if report.flagged:
                self.logger.warning("crossings left %s", format_fields(frame=index))

        self.state = state
        trace = Trace(
            scenario.name,
            dt,
            positions,
            reports,
            elapsed,
            dt * (n_frames - 1),
            frozenset(stepper.active_keys),
        )
        self.logger.info(
            "finished %s",
            format_fields(frames=n_frames, sim_time=elapsed, quotient=trace.quotient),
        )
        return trace


def run_scenario(config: Union[Config, ScenarioConfig]) -> Trace:
    """Run *config* in a fresh :class:`Simulation`."""
    if isinstance(config, ScenarioConfig):
        return Simulation().run(config)
    return Simulation.from_config(config).run()
