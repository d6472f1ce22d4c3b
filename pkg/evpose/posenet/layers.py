"""The building blocks: feature extractor F, heatmap heads g and g0,
ConvLSTM L, and the attention gate weighting past heatmaps.

Each block is a function of (input, params, config) so the same
ParamSet drives every time step.
"""

import logging
from dataclasses import dataclass

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.ndgrad import ParamSet, Tensor, ops
from evpose.posenet.config import DECONV_STAGES, ModelConfig

logger = logging.getLogger(__name__)

DECONV_KERNEL = 4


def _conv(params: ParamSet, rng, name: str, out_ch: int, in_ch: int, k: int) -> None:
    params.uniform(f"{name}.weight", (out_ch, in_ch, k, k), in_ch * k * k, rng)
    params.zeros(f"{name}.bias", (out_ch,))


def build_params(config: ModelConfig, seed: int = 0) -> ParamSet:
    """Initializes every parameter the configured variant uses.

    Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, except the
    LSTM forget-gate biases which start at 1. Blocks are created in a fixed
    order (encoder, decoder, LSTM, heads, attention), so variants built
    from one seed share every common parameter.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    params = ParamSet(config.dtype)
    m = config.feature_channels
    _conv(params, rng, "encoder.stem", m, 2, 3)
    for s in range(config.encoder_depth):
        _conv(params, rng, f"encoder.stage{s}.down", m, m, 3)
        for b in range(config.encoder_blocks):
            _conv(params, rng, f"encoder.stage{s}.block{b}.conv1", m, m, 3)
            _conv(params, rng, f"encoder.stage{s}.block{b}.conv2", m, m, 3)
    for d in range(DECONV_STAGES):
        params.uniform(
            f"decoder.deconv{d}.weight",
            (m, m, DECONV_KERNEL, DECONV_KERNEL),
            m * DECONV_KERNEL * DECONV_KERNEL,
            rng,
        )
        params.zeros(f"decoder.deconv{d}.bias", (m,))
    k = config.lstm_kernel
    for layer in range(config.lstm_layers):
        in_ch = (config.lstm_input_channels if layer == 0 else m) + m
        params.uniform(f"lstm.{layer}.weight", (4 * m, in_ch, k, k), in_ch * k * k, rng)
        bias = np.zeros(4 * m)
        bias[m : 2 * m] = 1.0
        params.add(f"lstm.{layer}.bias", bias)
    _conv(params, rng, "head", config.K, m, 1)
    if config.connected:
        _conv(params, rng, "bootstrap", config.K, m, 1)
    if config.variant == "dense_att":
        a = config.attention_channels
        _conv(params, rng, "attention.reduce", a, m, 1)
        _conv(params, rng, "attention.hidden", a, a + config.K, 1)
        _conv(params, rng, "attention.out", config.K, a, 1)
        params.zeros("attention.offset_bias", (config.T_max - 1,))
    logger.info("built %s for %s", params, config.variant)
    return params


def _apply(x: Tensor, params: ParamSet, name: str, stride: int = 1, padding: int = 0) -> Tensor:
    return ops.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], stride, padding)


def encoder_forward(frame: Tensor, params: ParamSet, config: ModelConfig) -> Tensor:
    """F: (N, 2, S, S) event frames -> (N, M, S/stride, S/stride) features."""
    if frame.values.ndim != 4 or frame.shape[1:] != (2, config.input_size, config.input_size):
        raise InvalidArgument(
            f"encoder wants (N, 2, {config.input_size}, {config.input_size}), got {frame.shape}"
        )
    x = ops.relu(_apply(frame, params, "encoder.stem", stride=2, padding=1))
    for s in range(config.encoder_depth):
        x = ops.relu(_apply(x, params, f"encoder.stage{s}.down", stride=2, padding=1))
        for b in range(config.encoder_blocks):
            name = f"encoder.stage{s}.block{b}"
            y = ops.relu(_apply(x, params, f"{name}.conv1", padding=1))
            y = _apply(y, params, f"{name}.conv2", padding=1)
            x = ops.relu(ops.add(x, y))
    for d in range(DECONV_STAGES):
        x = ops.conv_transpose2d(
            x,
            params[f"decoder.deconv{d}.weight"],
            params[f"decoder.deconv{d}.bias"],
            stride=2,
            padding=1,
        )
        x = ops.relu(x)
    return x


def head_forward(x: Tensor, params: ParamSet, config: ModelConfig, name: str = "head") -> Tensor:
    """g (or g0 with name="bootstrap"): 1x1 convolution M -> K, no activation."""
    if x.values.ndim != 4 or x.shape[1] != config.feature_channels:
        raise InvalidArgument(f"{name} wants {config.feature_channels} channels, got {x.shape}")
    return _apply(x, params, name)


@dataclass
class ConvLstmState:
    """Per-layer cell and hidden tensors."""

    cells: list[Tensor]
    hidden: list[Tensor]

    @classmethod
    def zeros(cls, config: ModelConfig, batch: int) -> "ConvLstmState":
        """All-zero state for a fresh sequence."""
        shape = (batch, config.feature_channels, config.heatmap_size, config.heatmap_size)
        return cls(
            [Tensor(np.zeros(shape, dtype=config.dtype)) for _ in range(config.lstm_layers)],
            [Tensor(np.zeros(shape, dtype=config.dtype)) for _ in range(config.lstm_layers)],
        )


def convlstm_step(
    x: Tensor, state: ConvLstmState, params: ParamSet, config: ModelConfig
) -> tuple[ConvLstmState, Tensor]:
    """One time step through the stacked ConvLSTM, no peepholes.

    Gate pre-activations come from one convolution over [x, h_prev]; its
    4M output channels are i, f, o and the cell candidate, in that order.

    Returns:
      (new state, hidden output of the top layer)
    """
    m = config.feature_channels
    pad = config.lstm_kernel // 2
    cells, hidden = [], []
    inp = x
    for layer in range(config.lstm_layers):
        h_prev, c_prev = state.hidden[layer], state.cells[layer]
        if inp.values.ndim != 4 or inp.shape[2:] != h_prev.shape[2:] or inp.shape[0] != h_prev.shape[0]:
            raise InvalidArgument(f"lstm layer {layer}: input {inp.shape} vs state {h_prev.shape}")
        z = ops.conv2d(
            ops.concat_channels([inp, h_prev]),
            params[f"lstm.{layer}.weight"],
            params[f"lstm.{layer}.bias"],
            padding=pad,
        )
        i = ops.sigmoid(ops.channel_slice(z, 0, m))
        f = ops.sigmoid(ops.channel_slice(z, m, 2 * m))
        o = ops.sigmoid(ops.channel_slice(z, 2 * m, 3 * m))
        g = ops.tanh(ops.channel_slice(z, 3 * m, 4 * m))
        c = ops.add(ops.mul(f, c_prev), ops.mul(i, g))
        h = ops.mul(o, ops.tanh(c))
        cells.append(c)
        hidden.append(h)
        inp = h
    return ConvLstmState(cells, hidden), inp


def attention_weights(
    features: Tensor,
    heatmaps: Tensor,
    offset: int,
    params: ParamSet,
    config: ModelConfig,
) -> Tensor:
    """W^t_tau: per-pixel, per-keypoint gate in [0, 1] for heatmaps b_tau at step t.

    sigmoid(out(relu(hidden([reduce(F_t), b_tau]))) + offset_bias[t - tau]),
    with every 1x1 convolution shared across all (t, tau) pairs.

    Arguments:
      features: F(I_t), (N, M, H', W')
      heatmaps: b_tau, (N, K, H', W')
      offset: t - tau, 1 <= offset <= T_max - 1
    """
    if not 1 <= offset <= config.T_max - 1:
        raise InvalidArgument(f"attention offset {offset} outside [1, {config.T_max - 1}]")
    reduced = _apply(features, params, "attention.reduce")
    z = ops.relu(_apply(ops.concat_channels([reduced, heatmaps]), params, "attention.hidden"))
    z = ops.add_offset(_apply(z, params, "attention.out"), params["attention.offset_bias"], offset - 1)
    return ops.sigmoid(z)
