"""shared functions"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from evpose.exceptions import InvalidConfig
from evpose.posenet import ModelConfig
from evpose.synthgen import SynthConfig
from evpose.trainer import TrainConfig
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.json"
SECTIONS = ("model", "train", "synth")


def slurp(filename: PathArg) -> str:
    """Suck a file into a str."""
    with open(filename, encoding="utf-8") as x:
        f = x.read()
    return f


def defaults_file() -> Path:
    """The packaged default run configuration."""
    return Path(__file__).parent.parent / "data" / "defaults.yml"


def load_mapping(filename: PathArg) -> dict:
    """Reads a YAML or JSON object; JSON loads as YAML."""
    try:
        data = yaml.safe_load(slurp(filename))
    except yaml.YAMLError as e:
        raise InvalidConfig(f"{filename}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"{filename}: top level must be an object, got {type(data).__name__}")
    return data


def _merge(base: dict, layer: Mapping[str, Any], origin: str) -> None:
    unknown = sorted(set(layer) - set(SECTIONS))
    if unknown:
        raise InvalidConfig(f"{origin}: unknown sections {unknown}, want {list(SECTIONS)}")
    for section, values in layer.items():
        if values is None:
            continue
        if not isinstance(values, dict):
            raise InvalidConfig(f"{origin}: section {section} must be an object")
        base.setdefault(section, {}).update(values)


@dataclass
class RunConfig:
    """Model, training and generation settings for one command.

    Resolved from the packaged defaults, then an optional user file, then
    command-line flags, each layer overriding the one before.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    @classmethod
    def resolve(
        cls,
        config: Optional[PathArg] = None,
        overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    ) -> "RunConfig":
        """Merges defaults < config file < overrides and validates the result.

        Override values of None are dropped, so unset flags fall through.
        """
        merged: dict[str, dict] = {}
        _merge(merged, load_mapping(defaults_file()), str(defaults_file()))
        if config:
            _merge(merged, load_mapping(config), str(config))
            logger.info("config file %s", config)
        if overrides:
            _merge(
                merged,
                {s: {k: v for k, v in values.items() if v is not None} for s, values in overrides.items()},
                "flags",
            )
        run = cls(
            ModelConfig.from_dict(merged.get("model", {})),
            TrainConfig.from_dict(merged.get("train", {})),
            SynthConfig.from_dict(merged.get("synth", {})),
        )
        run.validate()
        return run

    def validate(self) -> None:
        """Cross-section checks."""
        if self.train.T > self.model.T_max:
            raise InvalidConfig(f"train.T {self.train.T} exceeds model.T_max {self.model.T_max}")

    def to_dict(self) -> dict:
        """All three sections as plain dicts."""
        return {"model": self.model.to_dict(), "train": self.train.to_dict(), "synth": self.synth.to_dict()}

    def echo(self, out: PathArg) -> Path:
        """Writes the resolved config into out as config.json."""
        path = Path(out) / CONFIG_ECHO
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("resolved config written to %s", path)
        return path


def sort_loglevel(verbose: bool) -> int:
    """INFO with -v, else LOGLEVEL from the environment, else WARNING."""
    if verbose:
        return logging.INFO
    name = os.environ.get("LOGLEVEL", "WARNING").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


def parse_pair(text: str) -> tuple[int, int]:
    """'t,tau' -> (t, tau)."""
    try:
        a, b = text.split(",")
        return int(a), int(b)
    except ValueError as e:
        raise InvalidConfig(f"want t,tau as two integers, got {text!r}") from e
