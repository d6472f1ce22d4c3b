"""Finite-difference suites behind ``evpose gradcheck``.

Every differentiable operation gets a small float64 instance, reduced to
a scalar through a fixed random projection. The model suites unroll the
micro configuration of each variant through the training loss.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from evpose.ndgrad import Tensor, grad_check, ops
from evpose.posenet import VARIANTS, ConvLstmState, attention_weights, build_params, convlstm_step, micro_config, unroll
from evpose.trainer import heatmap_loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
SHAPE = (2, 3, 5, 5)

Build = Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[Tensor]]]


@dataclass
class CheckResult:
    """Worst relative error of one suite."""

    name: str
    error: float
    elements: int
    seconds: float

    @property
    def passed(self) -> bool:
        """Below TOLERANCE."""
        return self.error < TOLERANCE


def _leaf(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def _away_from_zero(rng, shape, margin=0.1) -> np.ndarray:
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _projected(op: Callable[..., Tensor], probe: np.ndarray) -> Callable[..., Tensor]:
    def function(*inputs):
        return ops.total(ops.mul(op(*inputs), probe))

    return function


def _elementwise(op):
    def build(rng):
        inputs = [_leaf(_away_from_zero(rng, SHAPE)) for _ in range(2)]
        return _projected(op, _away_from_zero(rng, SHAPE)), inputs

    return build


def _unary(op, kink=False):
    def build(rng):
        x = _away_from_zero(rng, SHAPE) if kink else _away_from_zero(rng, SHAPE, margin=0.05) * 2
        return _projected(op, _away_from_zero(rng, SHAPE)), [_leaf(x)]

    return build


def _scale(rng):
    return _projected(lambda x: ops.scale(x, -1.7), _away_from_zero(rng, SHAPE)), [_leaf(rng.standard_normal(SHAPE))]


def _total(rng):
    return ops.total, [_leaf(rng.standard_normal(SHAPE))]


def _sum_tensors(rng):
    inputs = [_leaf(rng.standard_normal(SHAPE)) for _ in range(3)]
    probe = _away_from_zero(rng, SHAPE)
    return lambda *xs: ops.total(ops.mul(ops.sum_tensors(xs), probe)), inputs


def _sse(rng):
    target = rng.standard_normal(SHAPE)
    return lambda x: ops.sse(x, target), [_leaf(rng.standard_normal(SHAPE))]


def _concat(rng):
    a, b = _leaf(rng.standard_normal((2, 3, 4, 4))), _leaf(rng.standard_normal((2, 2, 4, 4)))
    probe = _away_from_zero(rng, (2, 5, 4, 4))
    return lambda x, y: ops.total(ops.mul(ops.concat_channels([x, y]), probe)), [a, b]


def _channel_slice(rng):
    probe = _away_from_zero(rng, (2, 2, 5, 5))
    return _projected(lambda x: ops.channel_slice(x, 1, 3), probe), [_leaf(rng.standard_normal(SHAPE))]


def _add_offset(rng):
    probe = _away_from_zero(rng, SHAPE)
    return (
        lambda x, table: ops.total(ops.mul(ops.add_offset(x, table, 1), probe)),
        [_leaf(rng.standard_normal(SHAPE)), _leaf(rng.standard_normal(3))],
    )


def _conv(stride, padding):
    def build(rng):
        x = _leaf(rng.standard_normal((2, 3, 7, 7)))
        w = _leaf(rng.standard_normal((4, 3, 3, 3)))
        b = _leaf(rng.standard_normal(4))
        out = (7 + 2 * padding - 3) // stride + 1
        probe = rng.standard_normal((2, 4, out, out))
        return lambda *a: ops.total(ops.mul(ops.conv2d(*a, stride=stride, padding=padding), probe)), [x, w, b]

    return build


def _deconv(rng):
    x = _leaf(rng.standard_normal((2, 3, 4, 4)))
    w = _leaf(rng.standard_normal((3, 2, 4, 4)))
    b = _leaf(rng.standard_normal(2))
    probe = rng.standard_normal((2, 2, 8, 8))
    return lambda *a: ops.total(ops.mul(ops.conv_transpose2d(*a, stride=2, padding=1), probe)), [x, w, b]


def _convlstm(rng):
    config = micro_config("dense_att")
    params = build_params(config, seed=int(rng.integers(1 << 31)))
    n, m, s = 2, config.feature_channels, config.heatmap_size
    x = _leaf(rng.standard_normal((n, config.lstm_input_channels, s, s)))
    h = _leaf(rng.standard_normal((n, m, s, s)) * 0.5)
    c = _leaf(rng.standard_normal((n, m, s, s)) * 0.5)
    upper = ConvLstmState.zeros(config, n)
    probe = rng.standard_normal((n, m, s, s))
    names = [name for name in params if name.startswith("lstm.")]

    def function(x, h, c, *_):
        state = ConvLstmState([c] + upper.cells[1:], [h] + upper.hidden[1:])
        new, out = convlstm_step(x, state, params, config)
        return ops.total(ops.add(ops.mul(out, probe), ops.mul(new.cells[0], probe)))

    return function, [x, h, c] + [params[name] for name in names]


def _attention(rng):
    config = micro_config("dense_att")
    params = build_params(config, seed=int(rng.integers(1 << 31)))
    n, s = 2, config.heatmap_size
    features = _leaf(rng.standard_normal((n, config.feature_channels, s, s)))
    heatmaps = _leaf(rng.standard_normal((n, config.K, s, s)))
    probe = rng.standard_normal((n, config.K, s, s))
    names = [name for name in params if name.startswith("attention.")]

    def function(features, heatmaps, *_):
        return ops.total(ops.mul(attention_weights(features, heatmaps, 1, params, config), probe))

    return function, [features, heatmaps] + [params[name] for name in names]


def _heatmap_loss(rng):
    shape = (2, 3, 4, 4)
    targets = [rng.random(shape) for _ in range(2)]
    masks = [rng.random((2, 3)) > 0.3 for _ in range(2)]
    return lambda a, b: heatmap_loss([a, b], targets, masks), [_leaf(rng.standard_normal(shape)) for _ in range(2)]


OPERATIONS: dict[str, Build] = {
    "add": _elementwise(ops.add),
    "sub": _elementwise(ops.sub),
    "mul": _elementwise(ops.mul),
    "scale": _scale,
    "sigmoid": _unary(ops.sigmoid),
    "tanh": _unary(ops.tanh),
    "relu": _unary(ops.relu, kink=True),
    "total": _total,
    "sum_tensors": _sum_tensors,
    "sse": _sse,
    "concat_channels": _concat,
    "channel_slice": _channel_slice,
    "add_offset": _add_offset,
    "conv2d": _conv(1, 1),
    "conv2d_stride2": _conv(2, 1),
    "conv_transpose2d": _deconv,
    "convlstm_step": _convlstm,
    "attention_weights": _attention,
    "heatmap_loss": _heatmap_loss,
}


def model_suite(variant: str, steps: int = 3) -> Build:
    """The micro configuration of one variant, unrolled through the training loss."""

    def build(rng):
        config = micro_config(variant)
        params = build_params(config, seed=int(rng.integers(1 << 31)))
        size, k = config.heatmap_size, config.K
        frames = rng.random((steps, 1, 2, config.input_size, config.input_size))
        targets = [rng.random((1, k, size, size)) for _ in range(steps)]
        masks = [np.ones((1, k), dtype=bool) for _ in range(steps)]
        names = list(params)

        def function(*_):
            return heatmap_loss(unroll(frames, config, params).heatmaps, targets, masks)

        return function, [params[name] for name in names]

    return build


def run_suites(
    full_model: bool = False,
    eps: float = 1e-5,
    max_elements: Optional[int] = 8,
    seed: int = 0,
    only: Optional[list[str]] = None,
) -> list[CheckResult]:
    """Runs the operation suites, plus one per model variant if full_model.

    Arguments:
      full_model: add the micro-configuration unroll of every variant
      eps: finite-difference step
      max_elements: elements sampled per model tensor; operation suites
        check every element
      seed: drives inputs and sampling
      only: suite names to run, all by default
    """
    suites = {name: (build, None) for name, build in OPERATIONS.items()}
    if full_model:
        suites.update({f"model.{v}": (model_suite(v), max_elements) for v in VARIANTS})
    results = []
    for i, (name, (build, limit)) in enumerate(suites.items()):
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        started = time.monotonic()
        function, inputs = build(rng)
        error = grad_check(function, inputs, eps=eps, max_elements=limit, seed=seed)
        elements = sum(t.size if limit is None else min(t.size, limit) for t in inputs)
        results.append(CheckResult(name, error, elements, time.monotonic() - started))
        logger.info("%s: worst relative error %.3e over %d elements", name, error, elements)
    return results
