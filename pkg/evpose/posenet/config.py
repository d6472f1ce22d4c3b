"""Model configuration."""

import logging
from dataclasses import dataclass

from evpose.exceptions import InvalidConfig
from evpose.settings import ConfigMixin

logger = logging.getLogger(__name__)

VARIANTS = ("rnn", "thin", "dense_no_att", "dense_att")
CONNECTED = ("thin", "dense_no_att", "dense_att")
DECONV_STAGES = 3


@dataclass
class ModelConfig(ConfigMixin):  # pylint: disable=too-many-instance-attributes
    """Shape of the network.

    The encoder is a stride-2 stem followed by encoder_depth stride-2
    residual stages; three stride-2 deconvolutions bring it back up, so
    2**(encoder_depth + 1) must equal 8 * heatmap_stride.

    Attributes:
      input_size: square input side in pixels
      heatmap_stride: input pixels per heatmap cell
      K: keypoints
      feature_channels: M, width of features and LSTM state
      encoder_depth: stride-2 residual stages after the stem
      encoder_blocks: residual blocks per stage
      lstm_layers: stacked ConvLSTM layers
      lstm_kernel: ConvLSTM kernel side
      variant: one of rnn, thin, dense_no_att, dense_att
      attention_channels: hidden width of the attention gate
      T_max: longest unroll, sizes the per-offset attention bias table
      mean_prior: divide dense priors by t
      dtype: float32 or float64
    """

    input_size: int = 256
    heatmap_stride: int = 4
    K: int = 13  # pylint: disable=invalid-name
    feature_channels: int = 32
    encoder_depth: int = 4
    encoder_blocks: int = 1
    lstm_layers: int = 2
    lstm_kernel: int = 3
    variant: str = "dense_att"
    attention_channels: int = 16
    T_max: int = 16  # pylint: disable=invalid-name
    mean_prior: bool = False
    dtype: str = "float32"

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"variant {self.variant!r} not one of {VARIANTS}")
        for name in ("input_size", "heatmap_stride", "K", "feature_channels", "lstm_layers", "attention_channels"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.T_max < 1:
            raise InvalidConfig("T_max must be >= 1")
        if self.encoder_depth < 0 or self.encoder_blocks < 0:
            raise InvalidConfig("encoder_depth and encoder_blocks must be >= 0")
        if self.lstm_kernel < 1 or self.lstm_kernel % 2 == 0:
            raise InvalidConfig("lstm_kernel must be odd")
        if self.input_size % self.heatmap_stride:
            raise InvalidConfig(
                f"input_size {self.input_size} not divisible by heatmap_stride {self.heatmap_stride}"
            )
        down = 2 ** (self.encoder_depth + 1)
        if down != self.heatmap_stride * 2**DECONV_STAGES:
            raise InvalidConfig(
                f"encoder downsamples by {down} but {DECONV_STAGES} deconvolutions need "
                f"{self.heatmap_stride * 2**DECONV_STAGES} to reach stride {self.heatmap_stride}"
            )
        if self.input_size % down:
            raise InvalidConfig(f"input_size {self.input_size} not divisible by {down}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfig(f"dtype {self.dtype!r} must be float32 or float64")

    @property
    def heatmap_size(self) -> int:
        """W' = H' = input_size / heatmap_stride."""
        return self.input_size // self.heatmap_stride

    @property
    def connected(self) -> bool:
        """Whether heatmaps feed back into the LSTM input."""
        return self.variant in CONNECTED

    @property
    def lstm_input_channels(self) -> int:
        """M for rnn, M + K for the connected variants."""
        return self.feature_channels + (self.K if self.connected else 0)


def micro_config(variant: str = "dense_att", **changes) -> ModelConfig:
    """Tiny 64-bit configuration for gradient checks."""
    values = {
        "input_size": 16,
        "heatmap_stride": 2,
        "K": 2,
        "feature_channels": 4,
        "encoder_depth": 3,
        "attention_channels": 2,
        "T_max": 3,
        "variant": variant,
        "dtype": "float64",
    }
    values.update(changes)
    return ModelConfig.from_dict(values)
