"""Shared plumbing for the dataclass configurations and the environment."""

import dataclasses
import logging
import os
from typing import Any, Mapping, Optional, TypeVar

from evpose.exceptions import InvalidConfig

logger = logging.getLogger(__name__)

C = TypeVar("C", bound="ConfigMixin")


class ConfigMixin:
    """to_dict/from_dict/replace for config dataclasses.

    Subclasses implement validate() and raise InvalidConfig from it.
    """

    def validate(self) -> None:
        """Raises InvalidConfig if the values can't work together."""

    def to_dict(self) -> dict[str, Any]:
        """Plain dict, safe for JSON."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls: type[C], mapping: Mapping[str, Any]) -> C:
        """Builds and validates a config, rejecting unknown keys."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(names))
        if unknown:
            raise InvalidConfig(f"{cls.__name__}: unknown keys {unknown}")
        kwargs = {}
        for key, value in mapping.items():
            default = names[key].default
            if isinstance(default, bool) or value is None:
                kwargs[key] = value
            elif isinstance(default, (int, float)) and not isinstance(value, bool):
                try:
                    kwargs[key] = type(default)(value)
                except (TypeError, ValueError) as e:
                    raise InvalidConfig(f"{cls.__name__}.{key}: {e}") from e
            else:
                kwargs[key] = value
        config = cls(**kwargs)
        config.validate()
        return config

    def replace(self: C, **changes) -> C:
        """Copy with some fields changed, validated."""
        config = dataclasses.replace(self, **changes)
        config.validate()
        return config


def worker_count(default: Optional[int] = None) -> int:
    """Thread pool size: EVPOSE_THREADS if set, else default or the CPU count."""
    raw = os.environ.get("EVPOSE_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError as e:
            raise InvalidConfig(f"EVPOSE_THREADS={raw!r} is not an integer") from e
        if value < 1:
            raise InvalidConfig(f"EVPOSE_THREADS must be >= 1, got {value}")
        return value
    return default or os.cpu_count() or 1
