from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest
from _pytest.monkeypatch import MonkeyPatch

from drape.collision import ContactRecord
from drape.config import Config
from drape.constraints import ConstraintKind
from drape.exceptions import ConfigurationError, CyclingError, StepFailure
from drape.mesh import ClothMesh, ClothState, lumped_mass, MassMatrix
from drape.obstacles import Plane
from drape.qp import ActiveSetSolver, InteriorPointSolver, QpProblem
from drape.signals import omega_reduced, step_finished
from drape.stepper import (
    PinSet,
    Scene,
    StepConfig,
    Stepper,
    StepReport,
    unconstrained_step,
    warm_start_sets,
)
from drape.utils import rotation_about

GRAVITY = np.array([0.0, 0.0, -9.81])


@pytest.fixture(name="floor_scene")
def _floor_scene(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> Scene:
    return Scene(patch_mesh, patch_mass, [Plane(mu=0.3, name="floor")])


@pytest.fixture(name="settled")
def _settled(floor_scene: Scene) -> Tuple[Stepper, ClothState]:
    """The patch after falling onto the floor and coming to rest."""
    stepper = Stepper(floor_scene, StepConfig(self_collision=False), ActiveSetSolver())
    state = ClothState.at_rest(floor_scene.mesh)
    for _ in range(15):
        state, report = stepper.step(state)
        assert report.min_obstacle >= -1e-5
    return stepper, state


def test_free_fall_prediction(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    state = ClothState.at_rest(patch_mesh)
    predicted = unconstrained_step(state, patch_mass, StepConfig())
    expected = (patch_mesh.rest_positions + 1e-4 * GRAVITY).reshape(-1)
    np.testing.assert_allclose(predicted, expected, atol=1e-15)


def test_prediction_with_velocity(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    velocities = np.tile([1.0, 0.0, 0.0], patch_mesh.n_nodes)
    state = ClothState(patch_mesh.rest_vector, velocities)
    predicted = unconstrained_step(state, patch_mass, StepConfig(dt=0.02))
    displacement = (predicted - state.positions).reshape(-1, 3)
    np.testing.assert_allclose(displacement, [[0.02, 0.0, 0.0004 * -9.81]] * 9, atol=1e-15)


def test_virtual_mass_scales_gravity(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    state = ClothState.at_rest(patch_mesh)
    plain = unconstrained_step(state, patch_mass, StepConfig())
    heavy = unconstrained_step(state, patch_mass, StepConfig(virtual_mass=1.0))
    np.testing.assert_allclose(heavy - state.positions, 2.0 * (plain - state.positions))


def test_damping_is_implicit(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    velocities = np.tile([0.0, 0.0, -1.0], patch_mesh.n_nodes)
    state = ClothState(patch_mesh.rest_vector, velocities)
    predicted = unconstrained_step(state, patch_mass, StepConfig(damping=10.0))
    expected_velocity = (-1.0 - 0.01 * 9.81) / (1.0 + 10.0 * 0.01)
    np.testing.assert_allclose(
        (predicted - state.positions).reshape(-1, 3)[:, 2], 0.01 * expected_velocity
    )


def test_external_force_balances_gravity(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    state = ClothState.at_rest(patch_mesh)
    lift = -patch_mass.diagonal * np.tile(GRAVITY, patch_mesh.n_nodes)
    predicted = unconstrained_step(state, patch_mass, StepConfig(), external_force=lift)
    np.testing.assert_allclose(predicted, state.positions, atol=1e-15)


def test_prediction_places_pins(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    pins = PinSet.from_waypoints([4], [[0.0, 0.0, 0.0, 0.5], [1.0, 1.0, 0.0, 0.5]])
    state = ClothState.at_rest(patch_mesh, time=0.5)
    predicted = unconstrained_step(state, patch_mass, StepConfig(), pins).reshape(-1, 3)
    np.testing.assert_allclose(predicted[4], [0.51, 0.0, 0.5])


def test_step_config_validation() -> None:
    with pytest.raises(ConfigurationError):
        StepConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        StepConfig(omega=0.5)
    with pytest.raises(ConfigurationError):
        StepConfig(eps_inext=0.0)
    with pytest.raises(ConfigurationError):
        StepConfig(virtual_mass=-1.0)


def test_step_config_from_config(config: Config) -> None:
    config["STEP_DT"] = 0.005
    config["COLLISION_SELF"] = False
    step_config = StepConfig.from_config(config)
    assert step_config.dt == 0.005
    assert step_config.self_collision is False
    assert step_config.gravity == (0.0, 0.0, -9.81)


def test_pins_from_csv(assets: Path) -> None:
    pins = PinSet.from_csv([3], assets / "pins.csv")
    assert len(pins) == 1
    np.testing.assert_allclose(pins.positions_at(0.5), [[0.05, 0.0, 0.5]])
    np.testing.assert_allclose(pins.positions_at(2.0), [[0.1, 0.0, 0.5]])
    assert pins.mask(5).tolist() == [False, False, False, True, False]


def test_pin_block(patch_mesh: ClothMesh) -> None:
    pins = PinSet.fixed([0, 8], patch_mesh.rest_positions)
    positions = patch_mesh.rest_vector
    positions[2] += 0.01
    block = pins.block(positions, 0.0, patch_mesh.n_nodes)
    assert block.keys[:3] == [("pin", 0, 0), ("pin", 0, 1), ("pin", 0, 2)]
    np.testing.assert_allclose(block.values, [0.0, 0.0, 0.01, 0.0, 0.0, 0.0], atol=1e-15)
    assert block.jacobian[5, 26] == 1.0


def test_invalid_pins() -> None:
    with pytest.raises(ConfigurationError):
        PinSet.from_waypoints([0, 1], [[0.0, 1.0, 2.0, 3.0]])
    with pytest.raises(ConfigurationError):
        PinSet([0, 0], [0.0], np.zeros((1, 2, 3)))
    with pytest.raises(ConfigurationError):
        PinSet([0], [1.0, 0.0], np.zeros((2, 1, 3)))


def test_warm_start_sets() -> None:
    keys = [("obstacle", "floor", 0), ("obstacle", "floor", 1), ("stick", 0, 3)]
    previous = {("stick", 0, 3), ("obstacle", "floor", 0), ("cusp", 0, 1)}
    assert warm_start_sets(previous, keys) == [0, 2]
    assert warm_start_sets(set(), keys) == []


def test_free_fall_step(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    stepper = Stepper(
        Scene(patch_mesh, patch_mass), StepConfig(self_collision=False), ActiveSetSolver()
    )
    state = ClothState.at_rest(patch_mesh)
    new_state, report = stepper.step(state)
    np.testing.assert_allclose(
        new_state.nodes, patch_mesh.rest_positions + 1e-4 * GRAVITY, atol=1e-12
    )
    assert new_state.time == pytest.approx(0.01)
    assert report.iterations == 1
    assert report.max_inext < 1e-6
    assert report.contacts == {}


def test_drop_on_floor(settled: Tuple[Stepper, ClothState]) -> None:
    _, state = settled
    np.testing.assert_allclose(state.nodes[:, 2], 0.0, atol=1e-5)
    np.testing.assert_allclose(state.velocities, 0.0, atol=1e-3)


def test_resting_contact_balances_weight(
    settled: Tuple[Stepper, ClothState], patch_mass: MassMatrix
) -> None:
    stepper, state = settled
    new_state, report = stepper.step(state)
    assert report.contact_force == pytest.approx(9.81 * patch_mass.total, rel=1e-3)
    assert report.contacts == {"obstacle": 9}
    assert report.exchanges == 0
    assert report.friction_power == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(new_state.positions, state.positions, atol=1e-5)


def test_solvers_agree_at_rest(
    settled: Tuple[Stepper, ClothState], floor_scene: Scene
) -> None:
    stepper, state = settled
    baseline = Stepper(floor_scene, StepConfig(self_collision=False), InteriorPointSolver())
    active_state, active_report = stepper.step(state)
    baseline_state, baseline_report = baseline.step(state)
    assert baseline.active_keys == stepper.active_keys
    assert baseline_report.contacts == active_report.contacts
    np.testing.assert_allclose(baseline_state.positions, active_state.positions, atol=1e-6)


def test_hanging_sheet_stays_inextensible(hanging_mesh: ClothMesh) -> None:
    tilt = rotation_about(np.array([1.0, 0.0, 0.0]), np.radians(30.0))
    mesh = ClothMesh.from_quads(
        hanging_mesh.rest_positions @ tilt.T, hanging_mesh.quads, hanging_mesh.shape
    )
    pinned = [56, 62]
    scene = Scene(mesh, lumped_mass(mesh, 0.1042), pins=PinSet.fixed(pinned, mesh.rest_positions))
    stepper = Stepper(scene, StepConfig(self_collision=False), ActiveSetSolver())
    state = ClothState.at_rest(mesh)
    for _ in range(3):
        state, report = stepper.step(state)
        assert report.max_inext < 1e-6
    np.testing.assert_allclose(state.nodes[pinned], mesh.rest_positions[pinned], atol=1e-8)
    # the free corners swing down and out of the plane
    assert state.nodes[0, 2] < mesh.rest_positions[0, 2]
    assert state.nodes[0, 1] != pytest.approx(mesh.rest_positions[0, 1], abs=1e-9)


def test_step_failure_carries_report(floor_scene: Scene) -> None:
    mesh = floor_scene.mesh
    state = ClothState(mesh.rest_vector, np.tile([0.0, 0.0, -5.0], mesh.n_nodes))
    stepper = Stepper(
        floor_scene, StepConfig(self_collision=False, max_iterations=1), ActiveSetSolver()
    )
    with pytest.raises(StepFailure) as error:
        stepper.step(state)
    report = error.value.report
    assert isinstance(report, StepReport)
    assert report.iterations == 1
    assert report.last_increment > 1e-6


def test_step_finished_signal(patch_mesh: ClothMesh, patch_mass: MassMatrix) -> None:
    stepper = Stepper(
        Scene(patch_mesh, patch_mass), StepConfig(self_collision=False), ActiveSetSolver()
    )
    received: List[float] = []

    def record(sender: object, state: ClothState, report: StepReport) -> None:
        assert sender is stepper
        received.append(report.time)

    state = ClothState.at_rest(patch_mesh)
    with step_finished.connected_to(record):
        for _ in range(2):
            state, _ = stepper.step(state)
    assert received == pytest.approx([0.01, 0.02])


def test_report_digest() -> None:
    report = StepReport(time=0.1, iterations=3, contacts={"obstacle": 4, "self-collision": 2})
    row = report.digest()
    assert row["iterations"] == 3
    assert row["active_obstacle"] == 4
    assert row["active_self_collision"] == 2
    assert row["active_stick"] == 0
    assert "active_pin" not in row


def _settle(mesh: ClothMesh, mass: MassMatrix, mu: float) -> Tuple[Stepper, ClothState]:
    scene = Scene(mesh, mass, [Plane(mu=mu, name="floor")])
    stepper = Stepper(scene, StepConfig(self_collision=False), ActiveSetSolver())
    state = ClothState.at_rest(mesh)
    for _ in range(15):
        state, _ = stepper.step(state)
    return stepper, state


@pytest.mark.parametrize(
    "mu, speed", [(0.3, 0.1), (0.5, 0.2), (0.55, 0.3), (1.0, 0.5), (0.3, 0.5)]
)
def test_sliding_patch_comes_to_rest(
    patch_mesh: ClothMesh, patch_mass: MassMatrix, mu: float, speed: float
) -> None:
    stepper, state = _settle(patch_mesh, patch_mass, mu)
    velocities = state.velocities.reshape(-1, 3).copy()
    velocities[:, 0] = speed
    state = ClothState(state.positions, velocities.reshape(-1), state.time)
    deceleration = mu * 9.81 * 0.01

    state, report = stepper.step(state)
    np.testing.assert_allclose(state.velocities[0::3], speed - deceleration, rtol=1e-2)
    for _ in range(int(np.ceil(speed / deceleration)) + 3):
        state, report = stepper.step(state)
    np.testing.assert_allclose(state.velocities, 0.0, atol=1e-3)
    assert report.contacts == {"obstacle": 9}
    assert report.friction_power == pytest.approx(0.0, abs=1e-6)


def _harmless_record(node: int) -> ContactRecord:
    return ContactRecord(
        ConstraintKind.SELF_COLLISION,
        "node-face",
        ("self", node, "check"),
        (node,),
        (1.0,),
        (1.0,),
        (0.0, 0.0, 1.0),
        0.002,
        anchor=1.0,
    )


def test_crossings_halve_omega(
    patch_mesh: ClothMesh, patch_mass: MassMatrix, monkeypatch: MonkeyPatch
) -> None:
    stepper = Stepper(
        Scene(patch_mesh, patch_mass), StepConfig(self_collision=False), ActiveSetSolver()
    )
    seen: List[float] = []
    checks = {"count": 0}

    def detect(start: object, end: object, time: float, omega: float, iteration: int) -> list:
        if omega > 0.0:
            seen.append(omega)
            return []
        checks["count"] += 1
        return [_harmless_record(0)] if checks["count"] <= 2 else []

    monkeypatch.setattr(stepper, "_detect", detect)
    reduced: List[float] = []

    def record(sender: object, omega: float, crossings: int) -> None:
        reduced.append(omega)

    with omega_reduced.connected_to(record):
        _, report = stepper.step(ClothState.at_rest(patch_mesh))
    assert reduced == pytest.approx([0.225, 0.1125])
    assert report.omega_retries == 2
    assert report.omega == pytest.approx(0.1125)
    assert not report.flagged
    assert sorted(set(seen), reverse=True) == pytest.approx([0.45, 0.225, 0.1125])
    # the record found by the check takes part in the restarted steps
    assert ("self", 0, "check") in stepper.multipliers


def test_crossings_left_flag_the_step(
    patch_mesh: ClothMesh, patch_mass: MassMatrix, monkeypatch: MonkeyPatch
) -> None:
    stepper = Stepper(
        Scene(patch_mesh, patch_mass),
        StepConfig(self_collision=False, omega_min=0.1),
        ActiveSetSolver(),
    )

    def detect(start: object, end: object, time: float, omega: float, iteration: int) -> list:
        return [_harmless_record(4)] if omega == 0.0 else []

    monkeypatch.setattr(stepper, "_detect", detect)
    _, report = stepper.step(ClothState.at_rest(patch_mesh))
    assert report.omega_retries == 3
    assert report.omega == pytest.approx(0.1)
    assert report.flagged


def test_solver_error_fails_the_step(floor_scene: Scene, monkeypatch: MonkeyPatch) -> None:
    solver = ActiveSetSolver()

    def cycle(*args: object, **kwargs: object) -> None:
        raise CyclingError("Working set of size 9 revisited 3 times")

    monkeypatch.setattr(solver, "solve", cycle)
    stepper = Stepper(floor_scene, StepConfig(self_collision=False), solver)
    with pytest.raises(StepFailure) as error:
        stepper.step(ClothState.at_rest(floor_scene.mesh))
    assert isinstance(error.value.__cause__, CyclingError)
    assert isinstance(error.value.report, StepReport)


def test_flat_sheet_with_moving_pins(hanging_mesh: ClothMesh, monkeypatch: MonkeyPatch) -> None:
    pinned = [56, 62]
    rest = hanging_mesh.rest_positions[pinned].reshape(-1)
    offset = np.tile([0.0, 0.05, 0.05], 2)
    pins = PinSet.from_waypoints(pinned, [[0.0, *rest], [1.0, *(rest + offset)]])
    scene = Scene(hanging_mesh, lumped_mass(hanging_mesh, 0.1042), pins=pins)
    solver = ActiveSetSolver()
    rows: List[int] = []
    solve = solver.solve

    def counted(problem: QpProblem, *args: object) -> object:
        rows.append(problem.n_equalities)
        return solve(problem, *args)

    monkeypatch.setattr(solver, "solve", counted)
    stepper = Stepper(scene, StepConfig(self_collision=False), solver)
    state = ClothState.at_rest(hanging_mesh)
    for _ in range(5):
        state, report = stepper.step(state)
        assert report.max_inext < 1e-6
        assert report.max_pin < 1e-5
    np.testing.assert_allclose(state.nodes[pinned], pins.positions_at(state.time), atol=1e-8)
    # the flat sheet has more metric rows than in-plane freedom, the surplus is left out
    assert rows[0] < 3 * hanging_mesh.n_quads + 3 * len(pinned)
