"""A small dense-tensor engine with reverse-mode differentiation and Adam.

Typical usage:

from evpose.ndgrad import ParamSet, adam_step, backward, ops

params = ParamSet("float64")

w = params.add("w", [[1.0, 2.0]])

loss = ops.sse(w, [[0.0, 0.0]])

params.zero_grad()

backward(loss)

adam_step(params, lr=0.1, weight_decay=0.0)
"""

from evpose.ndgrad import ops
from evpose.ndgrad.check import grad_check, relative_error
from evpose.ndgrad.optim import ParamSet, adam_step
from evpose.ndgrad.tensor import Tape, TapeEntry, Tensor, backward
