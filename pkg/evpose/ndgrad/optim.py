"""Named parameters and the Adam optimizer."""

import logging
import math
from typing import Iterator, Optional

import numpy as np

from evpose.exceptions import InvalidArgument, InvalidState
from evpose.ndgrad.tensor import Tensor

logger = logging.getLogger(__name__)


class ParamSet:
    """Named parameter tensors plus their Adam moments.

    Attributes:
      dtype: element type of every parameter
      step: Adam steps taken so far
      m, v: first and second moment arrays, keyed like the parameters
    """

    def __init__(self, dtype="float64"):
        self.dtype = np.dtype(dtype)
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self._params: dict[str, Tensor] = {}

    def __repr__(self):
        return f"{self.__class__.__name__}({len(self)} tensors, {self.count()} values, {self.dtype})"

    def __len__(self):
        return len(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        """(name, tensor) pairs in insertion order."""
        return self._params.items()

    def add(self, name: str, values) -> Tensor:
        """Registers a new parameter; names must be unique."""
        if name in self._params:
            raise InvalidArgument(f"duplicate parameter name {name}")
        tensor = Tensor(np.array(values, dtype=self.dtype), requires_grad=True)
        self._params[name] = tensor
        self.m[name] = np.zeros_like(tensor.values)
        self.v[name] = np.zeros_like(tensor.values)
        return tensor

    def uniform(self, name: str, shape, fan_in: int, rng: np.random.Generator) -> Tensor:
        """Adds a parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        """Adds an all-zero parameter."""
        return self.add(name, np.zeros(shape))

    def count(self) -> int:
        """Total number of scalars."""
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        """Sets every gradient to zeros."""
        for tensor in self._params.values():
            tensor.zero_grad()

    def load(self, name: str, values: np.ndarray) -> None:
        """Overwrites a parameter's values, keeping its shape."""
        tensor = self._params[name]
        if tuple(values.shape) != tensor.shape:
            raise InvalidArgument(f"{name}: shape {values.shape} != {tensor.shape}")
        tensor.values = np.array(values, dtype=self.dtype)


def adam_step(
    params: ParamSet,
    lr: float = 5e-5,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
    names: Optional[list[str]] = None,
) -> None:
    """One bias-corrected Adam update, in place.

    Weight decay is decoupled: weights shrink by lr * weight_decay * w
    before the moment-based step and never enter the moments.
    """
    names = list(params) if names is None else names
    missing = [n for n in names if params[n].grad is None]
    if missing:
        raise InvalidState(f"no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    params.step += 1
    c1 = 1 - beta1**params.step
    c2 = 1 - beta2**params.step
    for name in names:
        p = params[name]
        g = p.grad
        m = params.m[name] = beta1 * params.m[name] + (1 - beta1) * g
        v = params.v[name] = beta2 * params.v[name] + (1 - beta2) * g * g
        w = p.values
        if weight_decay:
            w = w - lr * weight_decay * w
        p.values = (w - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(params.dtype)
    logger.debug("adam step %d, lr %g", params.step, lr)
