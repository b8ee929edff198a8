from __future__ import annotations

import importlib
import importlib.util
import json
import os
from configparser import ConfigParser
from typing import Any, Callable, Dict, IO, Mapping, Optional, Union

from .exceptions import ConfigurationError
from .typing import FilePath
from .utils import file_path_to_path

DEFAULT_CONFIG: Dict[str, Any] = {
    "DEBUG": None,
    "SCENARIO_NAME": "scenario",
    "SCENARIO_DURATION": 1.0,  # Second
    "SCENARIO_SEED": 0,
    "MESH_NX": 7,
    "MESH_NY": 9,
    "MESH_WIDTH": 0.42,  # Metre, DIN A2
    "MESH_HEIGHT": 0.594,
    "MESH_ORIGIN": [0.0, 0.0, 0.0],
    "MESH_PLANE": "xy",
    "MESH_ROTATION": 0.0,  # Degree about the vertical axis
    "MESH_TEMPLATE": None,
    "MATERIAL_DENSITY": 0.1042,  # kg/m², polyester
    "MATERIAL_DAMPING": 0.0,
    "MATERIAL_VIRTUAL_MASS": 0.0,
    "MATERIAL_THICKNESS": 0.002,  # Metre
    "MATERIAL_SELF_FRICTION": 0.0,
    "STEP_DT": 0.01,
    "STEP_EPS_INEXT": 1e-6,  # m²
    "STEP_EPS_PENETRATION": 1e-5,
    "STEP_EPS_INCREMENT": 1e-6,
    "STEP_MAX_ITERATIONS": 100,
    "STEP_GRAVITY": [0.0, 0.0, -9.81],
    "SOLVER_KIND": "active-set",
    "COLLISION_SELF": True,
    "COLLISION_OMEGA": 0.45,
    "COLLISION_OMEGA_MIN": 0.05,
    "COLLISION_OMEGA_RETRIES": 3,
    "COLLISION_FACE_MIDPOINTS": False,
    "PINS_NODES": [],
    "PINS_WAYPOINTS": None,
    "PINS_TRAJECTORY": None,
    "STICK_TRAJECTORY": None,
    "STICK_WAYPOINTS": None,
    "STICK_RADIUS": 0.0075,
    "STICK_SEGMENTS": 8,
    "STICK_FRICTION": 0.0,
    "OUTPUT_DIR": "output",
    "OUTPUT_OBJ": False,
    "OUTPUT_EVERY": 1,
    "OBSTACLES": {},
}

OBSTACLE_SECTION_PREFIX = "obstacle:"
_ROOT_SECTION = "__root__"


def _loads(value: str) -> Any:
    try:
        return json.loads(value)
    except ValueError:
        # Keep the value as a string if loading failed.
        return value


class ConfigAttribute:
    """Expose one configuration key as an attribute of the owner.

    The owner must carry a ``config`` mapping; reads go through the
    optional converter, writes store the raw value,

    .. code-block:: python

        class Simulation:
            dt = ConfigAttribute("STEP_DT", float)

        simulation.dt = "0.005"  # config["STEP_DT"] == "0.005", dt == 0.005
    """

    def __init__(self, key: str, converter: Optional[Callable[[Any], Any]] = None) -> None:
        self.key = key
        self.converter = converter

    def __get__(self, instance: Any, owner: Any = None) -> Any:
        if instance is None:
            return self
        value = instance.config[self.key]
        return value if self.converter is None else self.converter(value)

    def __set__(self, instance: Any, value: Any) -> None:
        instance.config[self.key] = value


class Config(dict):
    """Simulation settings as a flat dictionary with layered loaders.

    Keys are upper case and namespaced by section, ``MESH_NX`` is the
    ``nx`` key of the ``[mesh]`` section of a cfg file. Obstacles are
    the exception, they live in the ``OBSTACLES`` mapping keyed by
    name. Relative file names resolve against ``root_path``.
    """

    def __init__(self, root_path: FilePath, defaults: Optional[dict] = None) -> None:
        super().__init__(defaults or {})
        self.root_path = file_path_to_path(root_path)

    def from_prefixed_env(
        self, prefix: str = "DRAPE", *, loads: Callable[[str], Any] = _loads
    ) -> bool:
        """Override settings from ``<prefix>_*`` environment variables.

        ``DRAPE_STEP_DT=0.005`` sets ``STEP_DT``. A double underscore
        descends into a nested mapping, ``DRAPE_OBSTACLES__floor__mu=0.3``
        changes one parameter of one obstacle and creates missing
        levels on the way.

        Arguments:
            prefix: Variable prefix, without the trailing underscore.
            loads: Converts each raw value, JSON with a string fallback
                by default.
        """
        marker = f"{prefix}_"
        for name in sorted(os.environ):
            if not name.startswith(marker):
                continue
            *parents, leaf = name[len(marker) :].split("__")
            target: Dict[str, Any] = self
            for parent in parents:
                target = target.setdefault(parent, {})
            target[leaf] = loads(os.environ[name])
        return True

    def from_pyfile(self, filename: FilePath, silent: bool = False) -> bool:
        """Load a scenario file, either sectioned cfg or Python.

        Cfg files are read with :class:`~configparser.ConfigParser`,

        .. code-block:: ini

            [mesh]
            nx = 7
            origin = [0.0, 0.0, 0.7]

            [obstacle:floor]
            kind = "plane"
            mu = 0.4

        loads ``MESH_NX``, ``MESH_ORIGIN`` and ``OBSTACLES["floor"]``.
        Values are parsed as JSON when possible. Python files are
        executed and their upper case names kept.

        Arguments:
            filename: Path of the file, relative to :attr:`root_path`.
            silent: Return False instead of raising on a missing file.
        """
        file_path = self.root_path / file_path_to_path(filename)
        try:
            if file_path.suffix == ".py":
                module_spec = importlib.util.spec_from_file_location("drape_scenario", file_path)
                module = importlib.util.module_from_spec(module_spec)
                module_spec.loader.exec_module(module)  # type: ignore[union-attr]
                self.from_object(module)
            else:
                self.from_cfg_string(file_path.read_text())
        except (FileNotFoundError, IsADirectoryError):
            if silent:
                return False
            raise
        return True

    def from_cfg_string(self, content: str) -> bool:
        parser = ConfigParser()
        parser.optionxform = str  # type: ignore # keys keep their case
        try:
            parser.read_string(f"[{_ROOT_SECTION}]\n" + content)
        except Exception as error:
            raise ConfigurationError(f"Unreadable configuration: {error}") from error

        obstacles = dict(self.get("OBSTACLES") or {})
        for section in parser.sections():
            items = {key: _loads(value) for key, value in parser.items(section, raw=True)}
            if section == _ROOT_SECTION:
                self.from_mapping({key.upper(): value for key, value in items.items()})
            elif section.startswith(OBSTACLE_SECTION_PREFIX):
                name = section[len(OBSTACLE_SECTION_PREFIX) :].strip()
                obstacles[name] = {key.lower(): value for key, value in items.items()}
            else:
                prefix = section.strip().upper()
                self.from_mapping(
                    {f"{prefix}_{key.upper()}": value for key, value in items.items()}
                )
        if obstacles:
            self["OBSTACLES"] = obstacles
        return True

    def from_object(self, instance: Union[object, str]) -> None:
        """Copy the upper case attributes of a module or object.

        A string is imported first, either as a module or as
        ``module.attribute``. The presets are plain modules,

        .. code-block:: python

            config.from_object("drape.presets.cylinder")
        """
        if isinstance(instance, str):
            try:
                instance = importlib.import_module(instance)
            except ImportError:
                module_name, _, attribute = instance.rpartition(".")
                if not module_name:
                    raise
                instance = getattr(importlib.import_module(module_name), attribute)
        self.from_mapping({name: getattr(instance, name) for name in dir(instance)})

    def from_file(
        self, filename: FilePath, load: Callable[[IO[Any]], Mapping], silent: bool = False
    ) -> bool:
        """Load flat upper case settings from a data file.

        .. code-block:: python

            config.from_file("overrides.json", json.load)

        Arguments:
            filename: Path of the file, relative to :attr:`root_path`.
            load: Reads the open file and returns a mapping.
            silent: Return False instead of raising on a missing file.
        """
        try:
            with open(self.root_path / file_path_to_path(filename)) as file_:
                data = load(file_)
        except (FileNotFoundError, IsADirectoryError):
            if silent:
                return False
            raise
        return self.from_mapping(data)

    def from_mapping(self, mapping: Optional[Mapping[str, Any]] = None, **kwargs: Any) -> bool:
        """Update from a mapping and keyword arguments, upper case keys only."""
        for key, value in {**(mapping or {}), **kwargs}.items():
            if key.isupper():
                self[key] = value
        return True

    def get_namespace(
        self, namespace: str, lowercase: bool = True, trim_namespace: bool = True
    ) -> Dict[str, Any]:
        """Collect the keys that start with ``namespace``.

        ``config.get_namespace("GRID_")`` gives the fitting axes of a
        grid file as ``{"damping": [...], ...}``.

        Arguments:
            namespace: Key prefix, upper case, usually ending in ``_``.
            lowercase: Lower case the returned keys.
            trim_namespace: Strip the prefix from the returned keys.
        """
        selected = {}
        for key, value in self.items():
            if not key.startswith(namespace):
                continue
            name = key[len(namespace) :] if trim_namespace else key
            selected[name.lower() if lowercase else name] = value
        return selected

    def validate(self) -> None:
        """Reject keys that are not part of the documented schema."""
        unknown = sorted(key for key in self if key not in DEFAULT_CONFIG)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")
        if not isinstance(self["OBSTACLES"], Mapping):
            raise ConfigurationError("OBSTACLES must map obstacle names to parameters")

    def copy(self) -> "Config":
        config = type(self)(self.root_path)
        for key, value in self.items():
            config[key] = dict(value) if isinstance(value, dict) else value
        if isinstance(config.get("OBSTACLES"), dict):
            config["OBSTACLES"] = {
                name: dict(params) for name, params in config["OBSTACLES"].items()
            }
        return config

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {dict.__repr__(self)}>"
