"""Typing aliases"""

from os import PathLike
from typing import Union

import numpy as np

# integer microseconds everywhere
Microseconds = int
# (x, y) in pixels
Point = tuple[int, int]
PathArg = Union[str, PathLike]
# (N, C, H, W) float arrays; pytype can't see numpy dtypes so this stays loose
Array = np.ndarray
