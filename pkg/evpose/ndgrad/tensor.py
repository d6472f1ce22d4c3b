"""Tensors and the tape that records how they were computed.

Every operation whose inputs need gradients stamps its output with a
TapeEntry carrying a global sequence number. Walking back from a loss
and sorting those entries by sequence number recovers the exact order
the operations ran in; backward() visits them in reverse.
"""

import itertools
import logging
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from evpose.exceptions import InvalidArgument, InvalidState

logger = logging.getLogger(__name__)

_SEQUENCE = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class TapeEntry:
    """One executed operation: its inputs and how to push a gradient through it."""

    __slots__ = ("seq", "op", "inputs", "backward")

    def __init__(self, op: str, inputs: Sequence["Tensor"], backward: BackwardFn):
        self.seq = next(_SEQUENCE)
        self.op = op
        self.inputs = tuple(inputs)
        self.backward = backward

    def __repr__(self):
        return f"{self.__class__.__name__}({self.seq}, {self.op})"


class Tensor:
    """Dense row-major array that can take part in reverse-mode differentiation.

    Attributes:
      values: the numpy array
      requires_grad: whether backward() should produce a gradient for it
      grad: accumulated gradient, None until something writes one
      entry: the TapeEntry that produced it, None for leaves
    """

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.entry: Optional[TapeEntry] = None

    def __repr__(self):
        kind = self.entry.op if self.entry else "leaf"
        return f"{self.__class__.__name__}({kind}, shape={self.shape}, dtype={self.dtype})"

    @property
    def shape(self) -> tuple[int, ...]:
        """Extents."""
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        """Element type."""
        return self.values.dtype

    @property
    def size(self) -> int:
        """Product of extents."""
        return self.values.size

    def item(self) -> float:
        """The single value of a one-element tensor."""
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float("nan")

    def zero_grad(self) -> None:
        """Resets the gradient to zeros of the right shape."""
        self.grad = np.zeros_like(self.values)

    def detach(self) -> "Tensor":
        """Same values, cut off from the tape."""
        return Tensor(self.values)

    def numpy(self) -> np.ndarray:
        """The underlying array."""
        return self.values


def record(op: str, inputs: Sequence[Tensor], values: np.ndarray, backward: BackwardFn) -> Tensor:
    """Wraps an operation's result and puts it on the tape if any input needs a gradient."""
    out = Tensor(values)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.entry = TapeEntry(op, inputs, backward)
    return out


class Tape:
    """The operations behind one output, in execution order."""

    def __init__(self, records: list[tuple[Tensor, TapeEntry]]):
        self.records = records

    @classmethod
    def of(cls, output: Tensor) -> "Tape":
        """Collects every recorded operation the output depends on."""
        seen = set()
        records = []
        stack = [output]
        while stack:
            tensor = stack.pop()
            if id(tensor) in seen:
                continue
            seen.add(id(tensor))
            if tensor.entry is not None:
                records.append((tensor, tensor.entry))
                stack.extend(tensor.entry.inputs)
        records.sort(key=lambda r: r[1].seq)
        return cls(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[Tensor, TapeEntry]]:
        return iter(self.records)

    def ops(self) -> list[str]:
        """Operation names in execution order."""
        return [entry.op for _, entry in self.records]

    def count(self, op: str) -> int:
        """How many times op ran."""
        return sum(1 for _, entry in self.records if entry.op == op)

    def backward(self, loss: Tensor) -> None:
        """Pushes d(loss)/d(loss) = 1 back through the recorded operations.

        Gradients add up where a tensor feeds several operations, and
        add onto whatever .grad already holds.
        """
        grads = {id(loss): np.ones_like(loss.values)}
        touched = {id(loss): loss}
        for tensor, entry in reversed(self.records):
            g = grads.get(id(tensor))
            if g is None:
                continue
            for source, source_grad in zip(entry.inputs, entry.backward(g)):
                if source_grad is None or not source.requires_grad:
                    continue
                key = id(source)
                prev = grads.get(key)
                grads[key] = source_grad if prev is None else prev + source_grad
                touched[key] = source
        for key, tensor in touched.items():
            g = np.asarray(grads[key], dtype=tensor.dtype).reshape(tensor.shape)
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def backward(loss: Tensor) -> Tape:
    """Populates .grad on every requires_grad tensor the scalar loss depends on.

    Returns:
      The tape that was traversed, handy for counting operations.
    """
    if loss.size != 1:
        raise InvalidArgument(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise InvalidState("loss doesn't depend on anything that requires a gradient")
    tape = Tape.of(loss)
    logger.debug("backward over %d operations", len(tape))
    tape.backward(loss)
    return tape
