"""Differentiable operations on NCHW tensors.

No broadcasting: binary operations want equal shapes, and the only
implicit expansion is a per-channel bias inside the convolutions.
Gradient rules live in module-level ``_*_grad`` helpers.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from evpose.exceptions import InvalidArgument
from evpose.ndgrad.tensor import Tensor, record

logger = logging.getLogger(__name__)

TensorLike = Union[Tensor, np.ndarray, float]


def as_tensor(x: TensorLike, dtype=None) -> Tensor:
    """Leaves Tensors alone, wraps anything else as a constant."""
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise InvalidArgument(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# elementwise


def add(a: TensorLike, b: TensorLike) -> Tensor:
    """a + b."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return record("add", [a, b], a.values + b.values, lambda g: (g, g))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    """a - b."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return record("sub", [a, b], a.values - b.values, lambda g: (g, -g))


def _mul_grad(g, other):
    return g * other


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    """Hadamard product a ⊙ b."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return record(
        "mul",
        [a, b],
        a.values * b.values,
        lambda g: (_mul_grad(g, b.values), _mul_grad(g, a.values)),
    )


def scale(x: TensorLike, factor: float) -> Tensor:
    """x * factor for a plain scalar factor."""
    x = as_tensor(x)
    return record("scale", [x], x.values * factor, lambda g: (g * factor,))


def _sigmoid_grad(g, y):
    return g * y * (1 - y)


def sigmoid(x: TensorLike) -> Tensor:
    """Logistic function, computed as (1 + tanh(x/2)) / 2 so it never overflows."""
    x = as_tensor(x)
    y = 0.5 * (1 + np.tanh(0.5 * x.values))
    return record("sigmoid", [x], y, lambda g: (_sigmoid_grad(g, y),))


def _tanh_grad(g, y):
    return g * (1 - y * y)


def tanh(x: TensorLike) -> Tensor:
    """Hyperbolic tangent."""
    x = as_tensor(x)
    y = np.tanh(x.values)
    return record("tanh", [x], y, lambda g: (_tanh_grad(g, y),))


def _relu_grad(g, x):
    return g * (x > 0)


def relu(x: TensorLike) -> Tensor:
    """max(x, 0)."""
    x = as_tensor(x)
    return record("relu", [x], np.maximum(x.values, 0), lambda g: (_relu_grad(g, x.values),))


# reductions and plumbing


def total(x: TensorLike) -> Tensor:
    """Sum of every element, as a scalar tensor."""
    x = as_tensor(x)
    return record(
        "total",
        [x],
        np.asarray(x.values.sum(), dtype=x.dtype),
        lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),),
    )


def sum_tensors(tensors: Sequence[TensorLike]) -> Tensor:
    """Elementwise sum of equally shaped tensors, added left to right."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidArgument("sum_tensors needs at least one tensor")
    out = tensors[0].values.copy()
    for t in tensors[1:]:
        _same_shape("sum_tensors", tensors[0], t)
        out = out + t.values
    return record("sum_tensors", tensors, out, lambda g: tuple(g for _ in tensors))


def _sse_grad(g, diff):
    return 2 * g * diff


def sse(pred: TensorLike, target: TensorLike) -> Tensor:
    """Sum of squared differences, a scalar."""
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape("sse", pred, target)
    diff = pred.values - target.values
    value = np.asarray((diff * diff).sum(), dtype=pred.dtype)
    return record(
        "sse", [pred, target], value, lambda g: (_sse_grad(g, diff), -_sse_grad(g, diff))
    )


def concat_channels(tensors: Sequence[TensorLike]) -> Tensor:
    """Stacks NCHW tensors along C, in argument order."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidArgument("concat_channels needs at least one tensor")
    if len(tensors) == 1:
        return tensors[0]
    first = tensors[0].shape
    for t in tensors:
        if t.values.ndim != 4 or (t.shape[0],) + t.shape[2:] != (first[0],) + first[2:]:
            raise InvalidArgument(f"concat_channels: shape mismatch {first} vs {t.shape}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def grads(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return record(
        "concat_channels", tensors, np.concatenate([t.values for t in tensors], axis=1), grads
    )


def channel_slice(x: TensorLike, start: int, stop: int) -> Tensor:
    """Channels [start, stop) of an NCHW tensor."""
    x = as_tensor(x)
    if not 0 <= start < stop <= x.shape[1]:
        raise InvalidArgument(f"channel_slice [{start}, {stop}) out of range for {x.shape}")

    def grads(g):
        full = np.zeros_like(x.values)
        full[:, start:stop] = g
        return (full,)

    return record("channel_slice", [x], x.values[:, start:stop].copy(), grads)


def add_offset(x: TensorLike, table: Tensor, index: int) -> Tensor:
    """x + table[index], a learned scalar picked out of a 1-D table."""
    x = as_tensor(x)
    if table.values.ndim != 1 or not 0 <= index < table.shape[0]:
        raise InvalidArgument(f"add_offset: index {index} outside table of shape {table.shape}")

    def grads(g):
        gt = np.zeros_like(table.values)
        gt[index] = g.sum()
        return (g, gt)

    return record("add_offset", [x, table], x.values + table.values[index], grads)


# convolutions


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, Ho, Wo, kh, kw) view of every receptive field."""
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _correlate(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation of (N, C, H, W) with (O, C, kh, kw) -> (N, O, Ho, Wo)."""
    win = _windows(_pad(x, padding), w.shape[2], w.shape[3], stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _correlate_adjoint(g, w, stride, padding, x_shape) -> np.ndarray:
    """Transpose of _correlate's linear map in x: (N, O, Ho, Wo) -> x_shape."""
    n, c, h, wd = x_shape
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = g.shape[2], g.shape[3]
    cols = np.tensordot(g, w, axes=([1], [0]))  # N, Ho, Wo, C, kh, kw
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=np.result_type(g, w))
    for i in range(kh):
        for j in range(kw):
            xp[
                :,
                :,
                i : i + stride * (ho - 1) + 1 : stride,
                j : j + stride * (wo - 1) + 1 : stride,
            ] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(xp[:, :, padding : padding + h, padding : padding + wd])


def _weight_grad(x, g, stride, padding, kh, kw) -> np.ndarray:
    """d<g, correlate(x, w)>/dw -> (O, C, kh, kw)."""
    win = _windows(_pad(x, padding), kh, kw, stride)[:, :, : g.shape[2], : g.shape[3]]
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))


def _bias_grad(g):
    return g.sum(axis=(0, 2, 3))


def _conv_args(op, x, weight, bias, stride, padding, in_axis):
    if stride < 1 or padding < 0:
        raise InvalidArgument(f"{op}: stride must be >= 1 and padding >= 0")
    if x.values.ndim != 4 or weight.values.ndim != 4:
        raise InvalidArgument(f"{op}: want NCHW input and 4-d weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[in_axis]:
        raise InvalidArgument(f"{op}: input {x.shape} doesn't fit weight {weight.shape}")
    out_channels = weight.shape[1 - in_axis]
    if bias is not None and bias.shape != (out_channels,):
        raise InvalidArgument(f"{op}: bias {bias.shape} doesn't fit weight {weight.shape}")


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation, weight (O, C, kh, kw), bias (O,).

    Output extent per axis is floor((in + 2*padding - k) / stride) + 1.
    """
    _conv_args("conv2d", x, weight, bias, stride, padding, in_axis=1)
    kh, kw = weight.shape[2], weight.shape[3]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise InvalidArgument(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")
    out = _correlate(x.values, weight.values, stride, padding)
    if bias is not None:
        out = out + bias.values[None, :, None, None]

    def grads(g):
        res = (
            _correlate_adjoint(g, weight.values, stride, padding, x.shape),
            _weight_grad(x.values, g, stride, padding, kh, kw),
        )
        return res + (_bias_grad(g),) if bias is not None else res

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return record("conv2d", inputs, out, grads)


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Adjoint of conv2d, weight (C_in, C_out, kh, kw), bias (C_out,).

    Output extent per axis is (in - 1)*stride - 2*padding + k + output_padding.
    """
    _conv_args("conv_transpose2d", x, weight, bias, stride, padding, in_axis=0)
    if not 0 <= output_padding < stride:
        raise InvalidArgument(f"conv_transpose2d: output_padding {output_padding} must be < stride {stride}")
    kh, kw = weight.shape[2], weight.shape[3]
    n, _, h, w = x.shape
    out_h = (h - 1) * stride - 2 * padding + kh + output_padding
    out_w = (w - 1) * stride - 2 * padding + kw + output_padding
    if out_h < 1 or out_w < 1:
        raise InvalidArgument(f"conv_transpose2d: empty output for input {x.shape}")
    out_shape = (n, weight.shape[1], out_h, out_w)
    out = _correlate_adjoint(x.values, weight.values, stride, padding, out_shape)
    if bias is not None:
        out = out + bias.values[None, :, None, None]

    def grads(g):
        res = (
            _correlate(g, weight.values, stride, padding)[:, :, :h, :w],
            _weight_grad(g, x.values, stride, padding, kh, kw),
        )
        return res + (_bias_grad(g),) if bias is not None else res

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return record("conv_transpose2d", inputs, out, grads)
