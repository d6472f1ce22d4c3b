"""The recurrent pose network and its temporal connection variants.

Typical usage:

from evpose.posenet import ModelConfig, build_params, unroll

config = ModelConfig(variant="dense_att", input_size=64)

params = build_params(config, seed=0)

heatmaps = unroll(frames, config, params).heatmaps
"""

from evpose.posenet.config import CONNECTED, VARIANTS, ModelConfig, micro_config
from evpose.posenet.layers import (
    ConvLstmState,
    attention_weights,
    build_params,
    convlstm_step,
    encoder_forward,
    head_forward,
)
from evpose.posenet.model import (
    Diagnostics,
    PoseNet,
    Unroll,
    as_batch,
    direct_dependency,
    export_attention,
    unroll,
)
