"""Time stepping through a sequence of quadratic programs.

Every step starts from an implicit Euler prediction and corrects it
with increments that satisfy the linearized inextensibility, pin and
contact rows. Self contacts found between the start of the step and the
current iterate are added at every iteration, and the accepted end
state is checked once more for crossings with no proximity offset.
"""
from __future__ import annotations

import csv
import time
from collections import Counter
from dataclasses import dataclass, field
from logging import getLogger
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.sparse as sp

from .collision import ContactRecord, detect_collisions, merge_records, records_block
from .constraints import ConstraintBlock, ConstraintKind, ContactBlock, stack_jacobians
from .exceptions import ConfigurationError, SolverError, StepFailure
from .friction import dissipation, friction_force, friction_state, FrictionState, row_norms
from .inextensibility import eval_inext
from .logging import format_fields
from .mesh import ClothMesh, ClothState, MassMatrix
from .obstacles import (
    cusp_face_constraints,
    CuspSet,
    eval_obstacle,
    ImplicitObstacle,
    stick_edge_constraints,
    StickObstacle,
)
from .qp import fill_reducing_ordering, independent_rows, QpProblem, QpSolution, Solver
from .signals import omega_reduced, step_finished
from .typing import BoolArray, FilePath, FloatArray, IndexArray, RowKey
from .utils import file_path_to_path

log = getLogger(__name__)


@dataclass
class StepConfig:
    """Integration settings of a simulation.

    Tolerances are the stopping bounds of the iteration: ``eps_inext``
    on the metric residuals (m²), ``eps_penetration`` on contact
    violations and pin offsets (m) and ``eps_increment`` on the last
    increment (m).
    """

    dt: float = 0.01
    eps_inext: float = 1e-6
    eps_penetration: float = 1e-5
    eps_increment: float = 1e-6
    max_iterations: int = 100
    damping: float = 0.0
    virtual_mass: float = 0.0
    gravity: Tuple[float, float, float] = (0.0, 0.0, -9.81)
    thickness: float = 0.002
    omega: float = 0.45
    omega_min: float = 0.05
    omega_retries: int = 3
    self_collision: bool = True
    self_friction: float = 0.0
    face_midpoints: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ConfigurationError(f"Time step must be positive, got {self.dt}")
        if min(self.eps_inext, self.eps_penetration, self.eps_increment) <= 0:
            raise ConfigurationError("Tolerances must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("At least one iteration is required")
        if not 0.0 <= self.omega < 0.5:
            raise ConfigurationError(f"Proximity parameter must lie in [0, 0.5), got {self.omega}")
        if not 0.0 <= self.omega_min < 0.5 or self.omega_retries < 0:
            raise ConfigurationError("Invalid proximity back-off settings")
        if self.damping < 0 or self.virtual_mass <= -1.0:
            raise ConfigurationError("Damping must be non-negative and virtual mass above -1")
        if self.thickness < 0 or self.self_friction < 0:
            raise ConfigurationError("Thickness and friction must be non-negative")
        self.gravity = tuple(float(value) for value in self.gravity)  # type: ignore[assignment]

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "StepConfig":
        return cls(
            dt=float(config["STEP_DT"]),
            eps_inext=float(config["STEP_EPS_INEXT"]),
            eps_penetration=float(config["STEP_EPS_PENETRATION"]),
            eps_increment=float(config["STEP_EPS_INCREMENT"]),
            max_iterations=int(config["STEP_MAX_ITERATIONS"]),
            damping=float(config["MATERIAL_DAMPING"]),
            virtual_mass=float(config["MATERIAL_VIRTUAL_MASS"]),
            gravity=tuple(config["STEP_GRAVITY"]),  # type: ignore[arg-type]
            thickness=float(config["MATERIAL_THICKNESS"]),
            omega=float(config["COLLISION_OMEGA"]),
            omega_min=float(config["COLLISION_OMEGA_MIN"]),
            omega_retries=int(config["COLLISION_OMEGA_RETRIES"]),
            self_collision=bool(config["COLLISION_SELF"]),
            self_friction=float(config["MATERIAL_SELF_FRICTION"]),
            face_midpoints=bool(config["COLLISION_FACE_MIDPOINTS"]),
        )


@dataclass
class PinSet:
    """Scripted nodes following piecewise-linear trajectories.

    ``positions`` has shape ``(T, k, 3)`` for the ``k`` pinned nodes at
    the ``T`` sample times; outside the samples the ends are held.
    """

    nodes: IndexArray
    times: FloatArray
    positions: FloatArray

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(
            self.times.shape[0], self.nodes.shape[0], 3
        )
        if len(set(self.nodes.tolist())) != self.nodes.shape[0]:
            raise ConfigurationError("Pinned nodes must be distinct")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("Pin samples must be strictly increasing in time")

    @classmethod
    def fixed(cls, nodes: Sequence[int], rest_nodes: FloatArray) -> "PinSet":
        """Hold *nodes* at their positions in *rest_nodes*."""
        nodes = np.asarray(nodes, dtype=np.int64)
        return cls(nodes, np.zeros(1), np.asarray(rest_nodes)[nodes][None])

    @classmethod
    def from_waypoints(cls, nodes: Sequence[int], rows: Iterable[Sequence[float]]) -> "PinSet":
        """Rows are ``t, x1, y1, z1, x2, y2, z2, ...`` in pinned node order."""
        data = np.asarray(list(rows), dtype=float)
        nodes = np.asarray(nodes, dtype=np.int64)
        if data.ndim != 2 or data.shape[1] != 1 + 3 * nodes.shape[0]:
            raise ConfigurationError(
                f"Pin waypoints need {1 + 3 * nodes.shape[0]} columns for {nodes.shape[0]} nodes"
            )
        return cls(nodes, data[:, 0], data[:, 1:])

    @classmethod
    def from_csv(cls, nodes: Sequence[int], path: FilePath) -> "PinSet":
        rows = []
        with open(file_path_to_path(path), newline="") as file_:
            for row in csv.reader(file_):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(value) for value in row])
                except ValueError:
                    if rows:
                        raise ConfigurationError(f"Malformed pin sample {row!r}")
        if not rows:
            raise ConfigurationError(f"Pin trajectory {path!r} is empty")
        return cls.from_waypoints(nodes, rows)

    def __len__(self) -> int:
        return int(self.nodes.shape[0])

    def positions_at(self, time: float) -> FloatArray:
        flat = self.positions.reshape(self.times.shape[0], -1)
        values = [np.interp(time, self.times, flat[:, column]) for column in range(flat.shape[1])]
        return np.asarray(values).reshape(-1, 3)

    def mask(self, n_nodes: int) -> BoolArray:
        pinned = np.zeros(n_nodes, dtype=bool)
        pinned[self.nodes] = True
        return pinned

    def block(self, positions: FloatArray, time: float, n_nodes: int) -> ConstraintBlock:
        """Three equality rows per node, ``x - p(time) = 0``."""
        columns = (3 * self.nodes[:, None] + np.arange(3)).reshape(-1)
        targets = self.positions_at(time).reshape(-1)
        jacobian = sp.csr_matrix(
            (np.ones(columns.shape[0]), (np.arange(columns.shape[0]), columns)),
            shape=(columns.shape[0], 3 * n_nodes),
        )
        keys = [("pin", int(node), axis) for node in self.nodes for axis in range(3)]
        values = np.asarray(positions, dtype=float)[columns] - targets
        return ConstraintBlock(ConstraintKind.PIN, values, jacobian, keys)


@dataclass
class Scene:
    """Everything a step interacts with besides the cloth state."""

    mesh: ClothMesh
    mass: MassMatrix
    obstacles: List[ImplicitObstacle] = field(default_factory=list)
    pins: Optional[PinSet] = None
    stick: Optional[StickObstacle] = None
    cusps: Optional[CuspSet] = None
    cusp_mu: float = 0.0
    external_force: Optional[FloatArray] = None


@dataclass
class StepReport:
    time: float = 0.0
    iterations: int = 0
    max_inext: float = 0.0
    max_pin: float = 0.0
    min_obstacle: float = 0.0
    min_self: float = float("inf")
    last_increment: float = 0.0
    contacts: Dict[str, int] = field(default_factory=dict)
    exchanges: int = 0
    factor_updates: int = 0
    omega_retries: int = 0
    omega: float = 0.0
    wall_time: float = 0.0
    contact_force: float = 0.0
    friction_power: float = 0.0
    flagged: bool = False

    def digest(self) -> Dict[str, Any]:
        """Flat mapping of the report, as written to ``steps.csv``."""
        row = {
            name: getattr(self, name)
            for name in (
                "time",
                "iterations",
                "max_inext",
                "max_pin",
                "min_obstacle",
                "min_self",
                "last_increment",
                "exchanges",
                "factor_updates",
                "omega_retries",
                "omega",
                "wall_time",
                "contact_force",
                "friction_power",
                "flagged",
            )
        }
        for kind in ConstraintKind:
            if kind not in (ConstraintKind.INEXTENSIBILITY, ConstraintKind.PIN):
                row[f"active_{kind.name.lower()}"] = self.contacts.get(kind.value, 0)
        return row


def unconstrained_step(
    state: ClothState,
    mass: MassMatrix,
    config: StepConfig,
    pins: Optional[PinSet] = None,
    external_force: Optional[FloatArray] = None,
) -> FloatArray:
    """Implicit Euler prediction ignoring every constraint but the pins.

    Gravity is scaled by ``1 + virtual_mass`` and the mass-proportional
    damping ``-damping M v`` is taken implicitly.
    """
    dt = config.dt
    gravity = (1.0 + config.virtual_mass) * np.asarray(config.gravity)
    acceleration = np.tile(gravity, mass.node_masses.shape[0])
    if external_force is not None:
        acceleration = acceleration + mass.inverse * np.asarray(external_force, dtype=float)
    velocities = (state.velocities + dt * acceleration) / (1.0 + config.damping * dt)
    predicted = state.positions + dt * velocities
    if pins is not None and len(pins):
        nodes = predicted.reshape(-1, 3)
        nodes[pins.nodes] = pins.positions_at(state.time + dt)
    return predicted


def warm_start_sets(
    previous_active: Iterable[RowKey], keys: Sequence[RowKey]
) -> List[int]:
    """Rows of *keys* that were active at the end of the previous step.

    Equality rows always start in the working system, so only contact
    rows are returned; keys that no longer exist are dropped.
    """
    previous = set(previous_active)
    return [row for row, key in enumerate(keys) if key in previous]


class Stepper:
    """Advances a cloth state by one time step at a time.

    Arguments:
        scene: Mesh, masses, obstacles and scripted motion.
        config: Integration settings.
        solver: Any solver from :mod:`drape.qp`.
    """

    def __init__(self, scene: Scene, config: StepConfig, solver: Solver) -> None:
        self.scene = scene
        self.config = config
        self.solver = solver
        self.active_keys: Set[RowKey] = set()
        self.multipliers: Dict[RowKey, float] = {}
        n_nodes = scene.mesh.n_nodes
        self._pinned = (
            scene.pins.mask(n_nodes) if scene.pins is not None else np.zeros(n_nodes, bool)
        )
        self._pinned_columns = (
            3 * np.flatnonzero(self._pinned)[:, None] + np.arange(3)
        ).reshape(-1)

    # Assembly ------------------------------------------------------------

    def _equalities(self, positions: FloatArray, time: float) -> List[ConstraintBlock]:
        blocks = [eval_inext(self.scene.mesh, positions).as_block()]
        if self.scene.pins is not None and len(self.scene.pins):
            blocks.append(self.scene.pins.block(positions, time, self.scene.mesh.n_nodes))
        return blocks

    def _detect(
        self,
        start: FloatArray,
        end: FloatArray,
        time: float,
        omega: float,
        iteration: int,
    ) -> List[ContactRecord]:
        scene, config = self.scene, self.config
        records: List[ContactRecord] = []
        if config.self_collision:
            records.extend(
                detect_collisions(
                    scene.mesh,
                    start,
                    end,
                    config.dt,
                    omega,
                    config.thickness,
                    iteration,
                    mu=config.self_friction,
                )
            )
        if scene.cusps is not None:
            records.extend(
                cusp_face_constraints(
                    scene.cusps,
                    scene.mesh,
                    start,
                    end,
                    config.dt,
                    omega,
                    config.thickness,
                    iteration,
                    mu=scene.cusp_mu,
                )
            )
        if scene.stick is not None:
            records.extend(
                stick_edge_constraints(
                    scene.stick, scene.mesh, start, end, time, config.dt, omega, iteration
                )
            )
        return records

    def _contacts(
        self, positions: FloatArray, time: float, records: Mapping[RowKey, ContactRecord]
    ) -> ContactBlock:
        n_nodes = self.scene.mesh.n_nodes
        blocks = [
            eval_obstacle(
                obstacle, positions, time, self.scene.mesh, self.config.face_midpoints
            )
            for obstacle in self.scene.obstacles
        ]
        if records:
            blocks.append(records_block(list(records.values()), positions, n_nodes))
        contacts = ContactBlock.concatenate(blocks, n_nodes)
        if np.any(self._pinned) and len(contacts):
            # rows acting on scripted nodes only cannot be satisfied by the solver
            free = abs(contacts.coefficients) @ (~self._pinned).astype(float) > 0.0
            contacts = contacts.select(np.flatnonzero(free))
        return contacts

    # Stepping ------------------------------------------------------------

    def step(self, state: ClothState) -> Tuple[ClothState, StepReport]:
        started = time.perf_counter()
        config = self.config
        report = StepReport(time=state.time + config.dt, omega=config.omega)
        predicted = unconstrained_step(
            state, self.scene.mass, config, self.scene.pins, self.scene.external_force
        )

        omega = config.omega
        records: Dict[RowKey, ContactRecord] = {}
        while True:
            positions, records = self._iterate(state, predicted, omega, records, report)
            crossings = self._detect(
                state.positions, positions, state.time, 0.0, report.iterations
            )
            if not crossings:
                break
            if report.omega_retries >= config.omega_retries:
                report.flagged = True
                log.warning(
                    "accepting step with crossings %s",
                    format_fields(time=report.time, crossings=len(crossings), omega=omega),
                )
                break
            omega = max(0.5 * omega, config.omega_min)
            report.omega_retries += 1
            report.omega = omega
            records = merge_records(records, crossings)
            omega_reduced.send(self, omega=omega, crossings=len(crossings))
            log.debug(
                "restarting step %s",
                format_fields(time=report.time, crossings=len(crossings), omega=omega),
            )

        velocities = (positions - state.positions) / config.dt
        new_state = ClothState(positions, velocities, state.time + config.dt)
        report.wall_time = time.perf_counter() - started
        step_finished.send(self, state=new_state, report=report)
        return new_state, report

    def _iterate(
        self,
        state: ClothState,
        predicted: FloatArray,
        omega: float,
        records: Dict[RowKey, ContactRecord],
        report: StepReport,
    ) -> Tuple[FloatArray, Dict[RowKey, ContactRecord]]:
        scene, config = self.scene, self.config
        dt = config.dt
        t_next = state.time + dt
        mass = scene.mass.diagonal
        positions = predicted.copy()
        multipliers = dict(self.multipliers)
        active = set(self.active_keys)
        increment = np.inf
        applied: Dict[RowKey, FloatArray] = {}
        ordering: Optional[IndexArray] = None
        selected: Optional[IndexArray] = None

        for iteration in range(config.max_iterations + 1):
            records = merge_records(
                records, self._detect(state.positions, positions, state.time, omega, iteration)
            )
            equalities = self._equalities(positions, t_next)
            contacts = self._contacts(positions, t_next, records)
            friction = friction_state(
                contacts,
                (positions - state.positions) / dt,
                multipliers,
                scene.mass.node_masses,
                dt,
                previous=applied,
            )

            max_inext = float(np.abs(equalities[0].values).max(initial=0.0))
            max_pin = max(
                (float(np.abs(block.values).max()) for block in equalities[1:]), default=0.0
            )
            min_contact = float(contacts.values.min(initial=np.inf))
            if (
                iteration > 0
                and max_inext < config.eps_inext
                and max_pin < config.eps_penetration
                and min_contact >= -config.eps_penetration
                and increment < config.eps_increment
            ):
                self._accept(report, contacts, friction, multipliers, active, records, positions)
                report.max_inext = max_inext
                report.max_pin = max_pin
                report.min_obstacle = min_contact if len(contacts) else 0.0
                report.last_increment = increment
                return positions, records

            if iteration == config.max_iterations:
                break

            rows = self._independent(equalities[0])
            if selected is None or not np.array_equal(rows, selected):
                selected = rows
                ordering = None
            equalities[0] = equalities[0].select(selected)
            eq_jacobian = stack_jacobians(equalities, positions.shape[0])
            if ordering is None:
                ordering = fill_reducing_ordering(eq_jacobian)
            problem = QpProblem(
                mass,
                mass * (predicted - positions) + friction_force(friction),
                eq_jacobian,
                np.concatenate([block.values for block in equalities]),
                contacts.jacobian,
                contacts.values,
                [key for block in equalities for key in block.keys],
                contacts.keys,
            )
            try:
                solution: QpSolution = self.solver.solve(
                    problem, warm_start_sets(active, contacts.keys), ordering
                )
            except SolverError as error:
                report.max_inext = max_inext
                report.max_pin = max_pin
                report.min_obstacle = min_contact
                raise StepFailure(
                    f"Step to t={t_next:.4f} failed in iteration {iteration}: {error}", report
                ) from error
            report.iterations += 1
            report.exchanges += solution.stats.exchanges
            report.factor_updates += solution.stats.factor_updates

            positions = positions + solution.step
            increment = float(np.abs(solution.step).max(initial=0.0))
            multipliers = dict(zip(contacts.keys, solution.ineq_multipliers.tolist()))
            active = set(solution.active_keys(problem))
            applied = friction.by_key()

        report.max_inext = max_inext
        report.max_pin = max_pin
        report.min_obstacle = min_contact
        report.last_increment = increment
        residuals = format_fields(
            max_inext=max_inext, max_pin=max_pin, min_contact=min_contact, increment=increment
        )
        raise StepFailure(
            f"Step to t={t_next:.4f} did not converge in {config.max_iterations} iterations "
            f"({residuals})",
            report,
        )

    def _independent(self, inext: ConstraintBlock) -> IndexArray:
        """Inextensibility rows kept in the QP, independent of each other and the pins.

        A flat patch has more quad rows than in-plane degrees of freedom,
        the surplus rows are left out of the solve but still checked.
        """
        return independent_rows(
            inext.jacobian, self.scene.mass.inverse, fixed_columns=self._pinned_columns
        )

    def _accept(
        self,
        report: StepReport,
        contacts: ContactBlock,
        friction: FrictionState,
        multipliers: Dict[RowKey, float],
        active: Set[RowKey],
        records: Mapping[RowKey, ContactRecord],
        positions: FloatArray,
    ) -> None:
        dt2 = self.config.dt**2
        gamma = np.array([multipliers.get(key, 0.0) for key in contacts.keys])
        report.contact_force = float(np.maximum(gamma, 0.0) @ row_norms(contacts.jacobian)) / dt2
        report.friction_power = dissipation(friction) / dt2
        kinds = dict(zip(contacts.keys, contacts.kinds))
        report.contacts = dict(
            Counter(kinds[key].value for key in active if key in kinds)
        )
        separations = [
            record.separation(positions)
            for record in records.values()
            if record.kind == ConstraintKind.SELF_COLLISION
        ]
        report.min_self = min(separations, default=float("inf"))
        self.active_keys = {key for key in active if key in kinds}
        self.multipliers = {key: value for key, value in multipliers.items() if key in kinds}
