"""Dataset generation settings."""

import logging
from dataclasses import dataclass

from evpose.exceptions import InvalidConfig
from evpose.settings import ConfigMixin

logger = logging.getLogger(__name__)


@dataclass
class SynthConfig(ConfigMixin):  # pylint: disable=too-many-instance-attributes
    """Arguments for make_dataset that a run configuration can carry.

    Attributes:
      sequences: how many recordings to generate
      duration: length of each recording in µs
      interval: label frame interval in µs
      width, height: sensor size
      rate_per_px_speed: expected events per bone sample point per pixel moved
      noise_rate: background events per pixel per second
      static_fraction: share of sequences with a static-limb episode
      seed: drives every draw
    """

    sequences: int = 40
    duration: int = 1_000_000
    interval: int = 8333
    width: int = 128
    height: int = 128
    rate_per_px_speed: float = 2.0
    noise_rate: float = 0.0
    static_fraction: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        for name in ("sequences", "duration", "interval", "width", "height"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.rate_per_px_speed < 0 or self.noise_rate < 0:
            raise InvalidConfig("rates must be >= 0")
        if not 0 <= self.static_fraction <= 1:
            raise InvalidConfig(f"static_fraction must be in [0, 1], got {self.static_fraction}")
