"""Training configuration."""

import logging
from dataclasses import dataclass

from evpose.exceptions import InvalidConfig
from evpose.settings import ConfigMixin

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig(ConfigMixin):  # pylint: disable=too-many-instance-attributes
    """Optimizer, schedule, data and augmentation settings.

    Attributes:
      lr: initial Adam learning rate
      weight_decay: decoupled weight decay
      plateau_patience: epochs without a new best loss before lr is cut
      lr_factor: multiplier applied on a plateau
      lr_min: training stops once lr falls below this
      T: frames per training clip
      batch_size: clips per Adam step
      sigma: target Gaussian std in heatmap pixels
      epochs_max: hard epoch limit
      seed: drives initialization, data order and augmentation
      interval: frame length in µs
      count_cap: per-pixel count that maps to 1.0 in the input frames
      rotation_range: global rotation drawn from U(-range, range) degrees
      limb_rotation_prob: chance a clip gets a limb rotation
      limb_rotation_range: limb rotation drawn from U(-range, range) degrees
      augment: global rotation on/off
      pose_aug: limb rotation on/off
      val_pck: compute test-split PCK after each epoch
      clip_stride: frames between clip starts, 0 means T
    """

    lr: float = 5e-5
    weight_decay: float = 1e-4
    plateau_patience: int = 5
    lr_factor: float = 0.5
    lr_min: float = 1e-6
    T: int = 16  # pylint: disable=invalid-name
    batch_size: int = 4
    sigma: float = 2.0
    epochs_max: int = 100
    seed: int = 0
    interval: int = 8333
    count_cap: int = 8
    rotation_range: float = 30.0
    limb_rotation_prob: float = 0.5
    limb_rotation_range: float = 90.0
    augment: bool = True
    pose_aug: bool = True
    val_pck: bool = False
    clip_stride: int = 0

    def validate(self) -> None:
        if not 0 < self.lr_factor < 1:
            raise InvalidConfig(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.plateau_patience < 1:
            raise InvalidConfig("plateau_patience must be >= 1")
        if self.sigma <= 0:
            raise InvalidConfig(f"sigma must be positive, got {self.sigma}")
        if self.lr < 0 or self.weight_decay < 0 or self.lr_min < 0:
            raise InvalidConfig("lr, weight_decay and lr_min must be >= 0")
        for name in ("T", "batch_size", "interval", "count_cap"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.epochs_max < 0 or self.clip_stride < 0:
            raise InvalidConfig("epochs_max and clip_stride must be >= 0")
        if not 0 <= self.limb_rotation_prob <= 1:
            raise InvalidConfig("limb_rotation_prob must be in [0, 1]")
        if not 0 <= self.limb_rotation_range <= 90:
            raise InvalidConfig("limb_rotation_range must be in [0, 90]")

    @property
    def stride(self) -> int:
        """Frames between clip starts."""
        return self.clip_stride or self.T
