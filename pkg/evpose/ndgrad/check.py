"""Finite-difference gradient checking."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.ndgrad.tensor import Tensor, backward

logger = logging.getLogger(__name__)

SUSPICIOUS = 1e-6


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-8)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _central(function, inputs, flat, i, eps) -> float:
    orig = flat[i]
    flat[i] = orig + eps
    f_plus = function(*inputs).item()
    flat[i] = orig - eps
    f_minus = function(*inputs).item()
    flat[i] = orig
    return (f_plus - f_minus) / (2 * eps)


def grad_check(
    function: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    max_elements: Optional[int] = None,
    seed: int = 0,
    refine: int = 2,
) -> float:
    """Compares tape gradients with central differences.

    An element whose error exceeds SUSPICIOUS is retried with the step
    shrunk tenfold, up to refine times, and keeps its best error. A
    difference straddling a relu kink disagrees at one step size only;
    a wrong gradient rule disagrees at all of them.

    Arguments:
      function: deterministic, takes the inputs positionally, returns a scalar
      inputs: tensors to differentiate against; their values are perturbed in
        place and restored
      eps: finite-difference step
      max_elements: check at most this many randomly chosen elements per input
      refine: smaller steps to try on a suspicious element

    Returns:
      The worst element-wise relative error.
    """
    if eps <= 0:
        raise InvalidArgument(f"eps must be positive, got {eps}")
    for t in inputs:
        t.values = np.ascontiguousarray(t.values)
        t.grad = None
    backward(function(*inputs))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in inputs:
        analytic = np.zeros(t.size) if t.grad is None else t.grad.reshape(-1)
        flat = t.values.reshape(-1)
        idx = np.arange(t.size)
        if max_elements is not None and t.size > max_elements:
            idx = np.sort(rng.choice(t.size, size=max_elements, replace=False))
        for i in idx:
            a = float(analytic[i])
            error = relative_error(a, _central(function, inputs, flat, i, eps))
            step = eps
            for _ in range(refine):
                if error <= SUSPICIOUS:
                    break
                step /= 10
                error = min(error, relative_error(a, _central(function, inputs, flat, i, step)))
            worst = max(worst, error)
    logger.debug("grad_check worst relative error %.3e", worst)
    return worst
