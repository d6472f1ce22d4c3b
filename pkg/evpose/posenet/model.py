"""Unrolling the network over a clip, for all four connection variants.

rnn:           b_t = g(L(F(I_t)))
thin:          b_t = g(L([F(I_t), b_{t-1}]))
dense_no_att:  b_t = g(L([F(I_t), sum_{tau<t} b_tau]))
dense_att:     b_t = g(L([F(I_t), sum_{tau<t} W^t_tau * b_tau]))

Connected variants have no earlier heatmaps at t = 0 and use the
bootstrap head instead: prior_0 = g0(F(I_0)).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from evpose.events import FrameSequence
from evpose.exceptions import InvalidArgument, InvalidState
from evpose.ndgrad import ParamSet, Tensor, backward, ops
from evpose.posenet.config import ModelConfig
from evpose.posenet.layers import (
    ConvLstmState,
    attention_weights,
    build_params,
    convlstm_step,
    encoder_forward,
    head_forward,
)

logger = logging.getLogger(__name__)

Frames = Union[FrameSequence, np.ndarray, list]


@dataclass
class Diagnostics:
    """Switches that bend the unroll for structural experiments.

    Attributes:
      reset_state: zero the LSTM state before every step, so heatmaps only
        reach later steps through the prior connections
      attention_override: use this constant instead of computed attention
      probe_priors: feed every heatmap into a prior through its own leaf
        tensor, recorded in Unroll.prior_inputs, so direct dependencies can
        be read off gradients
    """

    reset_state: bool = False
    attention_override: Optional[float] = None
    probe_priors: bool = False


@dataclass
class Unroll:
    """What one pass over a clip produced.

    Attributes:
      heatmaps: b_t per step, each (N, K, H', W')
      attention: W^t_tau keyed by (t, tau), dense_att only
      prior_inputs: probe leaves keyed by (t, tau) when probing
    """

    heatmaps: list[Tensor]
    attention: dict[tuple[int, int], Tensor] = field(default_factory=dict)
    prior_inputs: dict[tuple[int, int], Tensor] = field(default_factory=dict)


def as_batch(frames: Frames, config: ModelConfig) -> np.ndarray:
    """Normalizes a clip to a (T, N, 2, S, S) array of the model's dtype.

    Accepts a FrameSequence, a (T, 2, S, S) array, a (T, N, 2, S, S)
    array, or a list of per-step (2, S, S) / (N, 2, S, S) arrays.
    """
    if isinstance(frames, FrameSequence):
        arr = frames.stack() if len(frames) else np.zeros((0, 2, 1, 1))
    else:
        arr = np.asarray(frames)
    if arr.ndim == 4:
        arr = arr[:, None]
    if arr.ndim != 5:
        raise InvalidArgument(f"frames must be (T, [N,] 2, S, S), got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=config.dtype)


def _prior(
    t: int,
    heatmaps: list[Tensor],
    features: Tensor,
    params: ParamSet,
    config: ModelConfig,
    diagnostics: Diagnostics,
    result: Unroll,
) -> Tensor:
    def use(tau: int) -> Tensor:
        if not diagnostics.probe_priors:
            return heatmaps[tau]
        leaf = Tensor(heatmaps[tau].values.copy(), requires_grad=True)
        result.prior_inputs[(t, tau)] = leaf
        return leaf

    if t == 0:
        return head_forward(features, params, config, name="bootstrap")
    if config.variant == "thin":
        return use(t - 1)
    if config.variant == "dense_no_att":
        terms = [use(tau) for tau in range(t)]
    else:
        terms = []
        for tau in range(t):
            b = use(tau)
            if diagnostics.attention_override is not None:
                w = Tensor(np.full(b.shape, diagnostics.attention_override, dtype=config.dtype))
            else:
                w = attention_weights(features, b, t - tau, params, config)
            result.attention[(t, tau)] = w
            terms.append(ops.mul(w, b))
    prior = ops.sum_tensors(terms)
    if config.mean_prior:
        prior = ops.scale(prior, 1.0 / t)
    return prior


def unroll(
    frames: Frames,
    config: ModelConfig,
    params: ParamSet,
    diagnostics: Optional[Diagnostics] = None,
) -> Unroll:
    """Runs the network over 1 <= T <= T_max frames.

    Heatmaps feeding the priors are the raw head outputs, so gradients
    flow back through every temporal connection.
    """
    diagnostics = diagnostics or Diagnostics()
    batch = as_batch(frames, config)
    steps, n = batch.shape[0], batch.shape[1]
    if not 1 <= steps <= config.T_max:
        raise InvalidArgument(f"clip of {steps} frames, need 1..{config.T_max}")
    result = Unroll([])
    state = ConvLstmState.zeros(config, n)
    for t in range(steps):
        features = encoder_forward(Tensor(batch[t]), params, config)
        x = features
        if config.connected:
            prior = _prior(t, result.heatmaps, features, params, config, diagnostics, result)
            x = ops.concat_channels([features, prior])
        if diagnostics.reset_state:
            state = ConvLstmState.zeros(config, n)
        state, h = convlstm_step(x, state, params, config)
        result.heatmaps.append(head_forward(h, params, config))
    logger.debug("unrolled %s over %d steps, %d attention maps", config.variant, steps, len(result.attention))
    return result


def export_attention(
    frames: Frames, config: ModelConfig, params: ParamSet, t: int, tau: int
) -> np.ndarray:
    """The attention weights unroll uses for the pair (t, tau), (N, K, H', W').

    Only the first t + 1 frames matter, since later steps can't influence
    earlier ones.
    """
    if config.variant != "dense_att":
        raise InvalidState(f"variant {config.variant} has no attention")
    batch = as_batch(frames, config)
    if not 0 <= tau < t < batch.shape[0]:
        raise InvalidArgument(f"need 0 <= tau < t < {batch.shape[0]}, got t={t}, tau={tau}")
    return unroll(batch[: t + 1], config, params).attention[(t, tau)].values.copy()


def direct_dependency(
    frames: Frames, config: ModelConfig, params: ParamSet, t: int = 2, tau: int = 0, seed: int = 0
) -> float:
    """Size of the direct influence of b_tau on b_t.

    LSTM state is reset between steps and every prior term gets its own
    leaf, so the result is the norm of a random projection of d b_t / d b_tau
    through the prior connection alone. Zero means b_tau doesn't feed b_t.
    Parameter gradients are left as they were.
    """
    if not 0 <= tau < t:
        raise InvalidArgument(f"need 0 <= tau < t, got t={t}, tau={tau}")
    saved = {name: p.grad for name, p in params.items()}
    try:
        result = unroll(frames, config, params, Diagnostics(reset_state=True, probe_priors=True))
        if t >= len(result.heatmaps):
            raise InvalidArgument(f"t={t} beyond a {len(result.heatmaps)}-frame clip")
        leaf = result.prior_inputs.get((t, tau))
        if leaf is None:
            return 0.0
        probe = np.random.default_rng(seed).standard_normal(result.heatmaps[t].shape)
        backward(ops.total(ops.mul(result.heatmaps[t], probe)))
        return float(np.linalg.norm(leaf.grad)) if leaf.grad is not None else 0.0
    finally:
        for name, p in params.items():
            p.grad = saved[name]


class PoseNet:
    """A configuration bound to its parameters.

    Example:
      >>> net = PoseNet(micro_config())
      >>> heatmaps = net.heatmaps(np.zeros((2, 2, 16, 16)))
      >>> heatmaps.shape
      (2, 1, 2, 8, 8)
    """

    def __init__(self, config: ModelConfig, params: Optional[ParamSet] = None, seed: int = 0):
        config.validate()
        self.config = config
        self.params = build_params(config, seed) if params is None else params

    def __repr__(self):
        return f"{self.__class__.__name__}({self.config.variant}, {self.params})"

    def unroll(self, frames: Frames, diagnostics: Optional[Diagnostics] = None) -> Unroll:
        """See unroll()."""
        return unroll(frames, self.config, self.params, diagnostics)

    def heatmaps(self, frames: Frames) -> np.ndarray:
        """Forward pass only, (T, N, K, H', W')."""
        return np.stack([b.values for b in self.unroll(frames).heatmaps])

    def attention(self, frames: Frames, t: int, tau: int) -> np.ndarray:
        """See export_attention()."""
        return export_attention(frames, self.config, self.params, t, tau)
