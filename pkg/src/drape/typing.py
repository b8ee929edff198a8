from __future__ import annotations

import os
from typing import Hashable, Union

import numpy as np
import numpy.typing as npt

FilePath = Union[bytes, str, os.PathLike]

FloatArray = npt.NDArray[np.float64]
IndexArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

#: Identifies a constraint row across iterations and time steps.
RowKey = Hashable
