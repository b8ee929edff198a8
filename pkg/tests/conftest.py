from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from drape.config import Config, DEFAULT_CONFIG
from drape.mesh import build_mesh, ClothMesh, lumped_mass, MassMatrix

ASSETS = Path(__file__).parent / "assets"


@pytest.fixture(name="assets")
def _assets() -> Path:
    return ASSETS


@pytest.fixture(name="rng")
def _rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(name="patch_mesh")
def _patch_mesh() -> ClothMesh:
    """A 3 x 3 node, 20 cm horizontal patch at 2 cm height."""
    return build_mesh(3, 3, 0.2, 0.2, origin=(-0.1, -0.1, 0.02))


@pytest.fixture(name="hanging_mesh")
def _hanging_mesh() -> ClothMesh:
    return build_mesh(7, 9, 0.42, 0.594, origin=(-0.21, 0.0, 0.3), plane="xz")


@pytest.fixture(name="patch_mass")
def _patch_mass(patch_mesh: ClothMesh) -> MassMatrix:
    return lumped_mass(patch_mesh, 0.1042)


@pytest.fixture(name="config")
def _config(tmp_path: Path) -> Config:
    config = Config(ASSETS, DEFAULT_CONFIG)
    config["OBSTACLES"] = {}
    config["OUTPUT_DIR"] = str(tmp_path / "output")
    return config


@pytest.fixture(name="patch_config")
def _patch_config(config: Config) -> Config:
    """The small scenario of ``assets/scenario.cfg``, a patch dropped on a floor."""
    config.from_pyfile("scenario.cfg")
    return config
