"""Recorded trajectories, the binary frame dump and reference traces.

A frame dump is a sequence of records, each a 16 byte header (the
``DRPF`` magic, the node count as ``<u4`` and the frame index as
``<u8``) followed by ``3 N`` little endian doubles. Reference traces
reuse the format for their marker positions and add two CSV sidecars,
``markers.csv`` mapping markers onto mesh nodes and ``mask.csv``
listing ``frame, marker, visible`` for every sample.
"""
from __future__ import annotations

import csv
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import (
    Any,
    BinaryIO,
    Dict,
    FrozenSet,
    Iterator,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
)

import numpy as np

from .exceptions import ValidationError
from .mesh import ClothMesh, write_obj
from .signals import frame_recorded
from .typing import BoolArray, FilePath, FloatArray, IndexArray, RowKey
from .utils import file_path_to_path

log = getLogger(__name__)

FRAME_MAGIC = b"DRPF"
FRAME_HEADER = struct.Struct("<4sIQ")
FRAME_DTYPE = np.dtype("<f8")

FRAMES_FILE = "frames.bin"
STEPS_FILE = "steps.csv"
MARKERS_FILE = "markers.csv"
MASK_FILE = "mask.csv"

#: Marker grid laid over rectangular meshes, columns by rows.
MARKER_GRID = (4, 5)


def write_frame(file_: BinaryIO, index: int, positions: FloatArray) -> None:
    values = np.ascontiguousarray(positions, dtype=FRAME_DTYPE).reshape(-1)
    if values.shape[0] % 3 != 0:
        raise ValueError("Frame length must be a multiple of 3")
    file_.write(FRAME_HEADER.pack(FRAME_MAGIC, values.shape[0] // 3, index))
    file_.write(values.tobytes())


def read_frames(path: FilePath) -> Tuple[IndexArray, FloatArray]:
    """Read a frame dump, returning the frame indices and ``(F, 3N)`` positions."""
    data = file_path_to_path(path).read_bytes()
    indices: List[int] = []
    frames: List[FloatArray] = []
    offset = 0
    n_nodes: Optional[int] = None
    while offset < len(data):
        if len(data) - offset < FRAME_HEADER.size:
            raise ValidationError(f"Truncated frame header at byte {offset} of {str(path)!r}")
        magic, count, index = FRAME_HEADER.unpack_from(data, offset)
        if magic != FRAME_MAGIC:
            raise ValidationError(f"Not a frame dump, bad magic at byte {offset} of {str(path)!r}")
        if n_nodes is not None and count != n_nodes:
            raise ValidationError("Frames of a dump must share the node count")
        n_nodes = count
        offset += FRAME_HEADER.size
        size = 3 * count * FRAME_DTYPE.itemsize
        if len(data) - offset < size:
            raise ValidationError(f"Truncated frame {index} in {str(path)!r}")
        frames.append(np.frombuffer(data, dtype=FRAME_DTYPE, count=3 * count, offset=offset))
        indices.append(index)
        offset += size
    if not frames:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 0))
    return np.asarray(indices, dtype=np.int64), np.vstack(frames).astype(float)


@dataclass
class Trace:
    """The recorded trajectory of a scenario run.

    ``positions`` has one flat ``3N`` row per frame, the initial state
    included; ``reports`` holds the digest of every accepted step and
    ``active_keys`` the contact rows active at the end of the last one.
    ``sim_time`` is the wall clock spent stepping and ``duration`` the
    simulated time.
    """

    scenario: str
    dt: float
    positions: FloatArray
    reports: List[Dict[str, Any]] = field(default_factory=list)
    sim_time: float = 0.0
    duration: float = 0.0
    active_keys: FrozenSet[RowKey] = frozenset()

    @property
    def n_frames(self) -> int:
        return int(self.positions.shape[0])

    @property
    def times(self) -> FloatArray:
        return self.dt * np.arange(self.n_frames)

    @property
    def quotient(self) -> float:
        """Wall clock per second of simulated motion."""
        if self.duration <= 0:
            return float("nan")
        return self.sim_time / self.duration

    def nodes(self, frame: int) -> FloatArray:
        return self.positions[frame].reshape(-1, 3)

    def final(self) -> FloatArray:
        return self.nodes(self.n_frames - 1)

    def save(self, directory: FilePath) -> Path:
        path = file_path_to_path(directory) / FRAMES_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as file_:
            for index, positions in enumerate(self.positions):
                write_frame(file_, index, positions)
        return path

    @classmethod
    def load(cls, directory: FilePath, dt: float, scenario: str = "") -> "Trace":
        indices, positions = read_frames(file_path_to_path(directory) / FRAMES_FILE)
        if not np.array_equal(indices, np.arange(indices.shape[0])):
            raise ValidationError("Simulation frame dumps must hold consecutive frames from 0")
        return cls(scenario, dt, positions, duration=dt * max(indices.shape[0] - 1, 0))


def default_markers(mesh: ClothMesh, grid: Tuple[int, int] = MARKER_GRID) -> IndexArray:
    """Mesh nodes carrying the markers, a coarse grid over rectangular meshes.

    On a ``7 x 9`` mesh the ``4 x 5`` grid picks every other node in both
    directions. Template meshes carry a marker on every node.
    """
    if mesh.shape is None:
        return np.arange(mesh.n_nodes, dtype=np.int64)
    nx, ny = mesh.shape
    columns = np.unique(np.rint(np.linspace(0, nx - 1, min(grid[0], nx))).astype(np.int64))
    rows = np.unique(np.rint(np.linspace(0, ny - 1, min(grid[1], ny))).astype(np.int64))
    return (rows[:, None] * nx + columns[None, :]).reshape(-1)


@dataclass
class ReferenceTrace:
    """Recorded marker positions, aligned with simulation frames by index.

    ``positions`` has shape ``(F, K, 3)`` and ``visible`` shape ``(F, K)``
    for the ``K`` markers placed on the mesh nodes ``markers``. Samples
    that are not visible take no part in any metric.
    """

    markers: IndexArray
    frames: IndexArray
    positions: FloatArray
    visible: BoolArray

    def __post_init__(self) -> None:
        self.markers = np.asarray(self.markers, dtype=np.int64).reshape(-1)
        self.frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(
            self.frames.shape[0], self.markers.shape[0], 3
        )
        self.visible = np.asarray(self.visible, dtype=bool).reshape(
            self.frames.shape[0], self.markers.shape[0]
        )

    @property
    def n_markers(self) -> int:
        return int(self.markers.shape[0])

    def save(self, directory: FilePath) -> Path:
        directory = file_path_to_path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / FRAMES_FILE, "wb") as file_:
            for index, positions in zip(self.frames.tolist(), self.positions):
                write_frame(file_, index, positions)
        with open(directory / MARKERS_FILE, "w", newline="") as file_:
            writer = csv.writer(file_)
            writer.writerow(("marker", "node"))
            writer.writerows(enumerate(self.markers.tolist()))
        with open(directory / MASK_FILE, "w", newline="") as file_:
            writer = csv.writer(file_)
            writer.writerow(("frame", "marker", "visible"))
            for row, index in enumerate(self.frames.tolist()):
                for marker in range(self.n_markers):
                    writer.writerow((index, marker, int(self.visible[row, marker])))
        return directory

    @classmethod
    def load(cls, directory: FilePath) -> "ReferenceTrace":
        """Load a reference directory, a missing mask means fully visible."""
        directory = file_path_to_path(directory)
        if not directory.is_dir():
            raise ValidationError(f"Reference {str(directory)!r} is not a directory")
        frames, positions = read_frames(directory / FRAMES_FILE)
        with open(directory / MARKERS_FILE, newline="") as file_:
            mapping = sorted(
                (int(row["marker"]), int(row["node"])) for row in csv.DictReader(file_)
            )
        if [marker for marker, _ in mapping] != list(range(len(mapping))):
            raise ValidationError("Markers must be numbered consecutively from 0")
        markers = np.asarray([node for _, node in mapping], dtype=np.int64)
        if positions.size and positions.shape[1] != 3 * markers.shape[0]:
            raise ValidationError("Reference frames do not match the marker mapping")

        visible = np.ones((frames.shape[0], markers.shape[0]), dtype=bool)
        mask_path = directory / MASK_FILE
        if mask_path.is_file():
            rows = {int(index): row for row, index in enumerate(frames.tolist())}
            with open(mask_path, newline="") as file_:
                for record in csv.DictReader(file_):
                    row = rows.get(int(record["frame"]))
                    if row is not None:
                        visible[row, int(record["marker"])] = bool(int(record["visible"]))
        return cls(markers, frames, positions, visible)


def make_synthetic_reference(
    trace: Trace,
    markers: Sequence[int],
    noise: float = 0.0,
    dropout: float = 0.0,
    seed: int = 0,
) -> ReferenceTrace:
    """Sample *trace* at *markers* as a stand-in for a recording.

    Arguments:
        noise: Standard deviation of the Gaussian noise added to every
            coordinate, metres.
        dropout: Probability of a sample being hidden.
        seed: Seed of the random generator.
    """
    if noise < 0 or not 0.0 <= dropout < 1.0:
        raise ValueError("Noise must be non-negative and dropout in [0, 1)")
    rng = np.random.default_rng(seed)
    markers = np.asarray(markers, dtype=np.int64)
    positions = trace.positions.reshape(trace.n_frames, -1, 3)[:, markers]
    if noise > 0:
        positions = positions + rng.normal(0.0, noise, size=positions.shape)
    visible = rng.random(positions.shape[:2]) >= dropout
    return ReferenceTrace(markers, np.arange(trace.n_frames), positions, visible)


class FrameRecorder:
    """Writes frames and step digests of a run into *directory*.

    Arguments:
        directory: Output directory, created when missing.
        mesh: Mesh used for the optional OBJ frames.
        obj: Also write ``frame_00000.obj`` files.
        every: Keep one frame in *every* for the OBJ export.
    """

    def __init__(
        self, directory: FilePath, mesh: ClothMesh, obj: bool = False, every: int = 1
    ) -> None:
        self.directory = file_path_to_path(directory)
        self.mesh = mesh
        self.obj = obj
        self.every = max(int(every), 1)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._frames: BinaryIO = open(self.directory / FRAMES_FILE, "wb")
        self._steps: Optional[TextIO] = None
        self._writer: Optional[csv.DictWriter] = None

    def write_frame(self, index: int, time: float, positions: FloatArray) -> None:
        write_frame(self._frames, index, positions)
        if self.obj and index % self.every == 0:
            write_obj(self.directory / f"frame_{index:05d}.obj", self.mesh, positions)

    def write_report(self, index: int, report: Any) -> None:
        row = {"step": index, **report.digest()}
        if self._writer is None:
            self._steps = open(self.directory / STEPS_FILE, "w", newline="")
            self._writer = csv.DictWriter(self._steps, fieldnames=list(row))
            self._writer.writeheader()
        self._writer.writerow(row)

    def close(self) -> None:
        self._frames.close()
        if self._steps is not None:
            self._steps.close()
        log.debug("frames written to %s", self.directory)

    def _on_frame(
        self,
        sender: Any,
        index: int,
        time: float,
        positions: FloatArray,
        report: Any = None,
    ) -> None:
        self.write_frame(index, time, positions)
        if report is not None:
            self.write_report(index, report)

    @contextmanager
    def attached(self, sender: Any) -> Iterator["FrameRecorder"]:
        """Record the frames *sender* announces on ``frame_recorded``."""
        with frame_recorded.connected_to(self._on_frame, sender=sender):
            try:
                yield self
            finally:
                self.close()
