from __future__ import annotations

import os
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .typing import FilePath, FloatArray


def file_path_to_path(*paths: FilePath) -> Path:
    # bytes paths are accepted for parity with os functions
    safe_paths: List[Union[str, os.PathLike]] = []
    for path in paths:
        if isinstance(path, bytes):
            safe_paths.append(path.decode())
        else:
            safe_paths.append(path)
    return Path(*safe_paths)


def resolve_asset(value: FilePath, root_path: Optional[FilePath]) -> Path:
    """Resolve *value* relative to *root_path* unless it is absolute."""
    path = file_path_to_path(value)
    if path.is_absolute() or root_path is None:
        return path
    return file_path_to_path(root_path) / path


def normalize(vector: FloatArray, guard: float = 0.0) -> FloatArray:
    """Return *vector* scaled to unit length, or zeros below *guard*."""
    norm = float(np.linalg.norm(vector))
    if norm <= guard or norm == 0.0:
        return np.zeros_like(vector)
    return vector / norm


def normalize_rows(vectors: FloatArray, guard: float = 0.0) -> FloatArray:
    norms = np.linalg.norm(vectors, axis=1)
    result = np.zeros_like(vectors)
    mask = norms > max(guard, 0.0)
    result[mask] = vectors[mask] / norms[mask, None]
    return result


def rotation_about(axis: FloatArray, angle: float) -> FloatArray:
    """Rodrigues rotation matrix for *angle* radians about *axis*."""
    axis = normalize(np.asarray(axis, dtype=float))
    cross = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * cross + (1.0 - np.cos(angle)) * cross @ cross


def get_debug_flag() -> bool:
    """Reads the DRAPE_DEBUG environment variable, unset means False."""
    value = os.getenv("DRAPE_DEBUG", None)

    if value is None:
        return False

    return value.lower() not in {"0", "false", "no"}
