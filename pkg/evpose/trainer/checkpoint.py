"""EPC1 checkpoints: model, optimizer and schedule state in one file.

Layout (little-endian):
  b"EPC1", u32 format version, u64 manifest length,
  manifest (UTF-8 JSON, sorted keys),
  float32 tensor payloads, concatenated in manifest order.

Tensors are the parameters ("param/<name>") followed by Adam's first
("adam.m/<name>") and second ("adam.v/<name>") moments.
"""

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from evpose.exceptions import FormatError, InvalidConfig, ShapeMismatch
from evpose.ndgrad import ParamSet
from evpose.posenet import ModelConfig, build_params
from evpose.trainer.config import TrainConfig
from evpose.trainer.schedule import ScheduleState
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

MAGIC = b"EPC1"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
PAYLOAD_DTYPE = np.dtype("<f4")
KINDS = ("param", "adam.m", "adam.v")


@dataclass
class Checkpoint:  # pylint: disable=too-many-instance-attributes
    """Everything needed to resume or evaluate a run.

    Attributes:
      model: network shape
      train: training settings the run used
      params: weights plus Adam moments and step count
      epoch: next epoch to run
      schedule: learning-rate schedule state
      losses: mean training loss per finished epoch
    """

    model: ModelConfig
    train: TrainConfig
    params: ParamSet
    epoch: int = 0
    schedule: Optional[ScheduleState] = None
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = ScheduleState(self.train.lr)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """(stored name, array) in payload order."""
        out = []
        for kind in KINDS:
            for name, tensor in self.params.items():
                if kind == "param":
                    arr = tensor.values
                elif kind == "adam.m":
                    arr = self.params.m[name]
                else:
                    arr = self.params.v[name]
                out.append((f"{kind}/{name}", arr))
        return out


def _manifest(ckpt: Checkpoint) -> tuple[dict, list[bytes]]:
    entries, payloads = [], []
    offset = 0
    for name, arr in ckpt.tensors():
        blob = np.ascontiguousarray(arr, dtype=PAYLOAD_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(blob)
        offset += len(blob)
    state = ckpt.schedule
    manifest = {
        "model": ckpt.model.to_dict(),
        "train": ckpt.train.to_dict(),
        "tensors": entries,
        "optimizer": {
            "step": ckpt.params.step,
            "lr": state.lr,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": ckpt.train.weight_decay,
        },
        "schedule": {
            "best": None if math.isinf(state.best) else state.best,
            "since_best": state.since_best,
            "stop": state.stop,
        },
        "epoch": ckpt.epoch,
        "losses": list(ckpt.losses),
        "rng": {"seed": ckpt.train.seed, "epoch": ckpt.epoch},
    }
    return manifest, payloads


def save_checkpoint(ckpt: Checkpoint, path: PathArg) -> None:
    """Writes ckpt to path; equal checkpoints give equal bytes."""
    manifest, payloads = _manifest(ckpt)
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, len(text)))
        f.write(text)
        for blob in payloads:
            f.write(blob)
    logger.info("saved checkpoint at epoch %d to %s", ckpt.epoch, path)


def load_checkpoint(path: PathArg, model: Optional[ModelConfig] = None) -> Checkpoint:
    """Reads and validates an EPC1 file.

    Arguments:
      path: checkpoint file
      model: if given, every stored parameter must fit this configuration

    Raises:
      FormatError: bad magic (offset 0), unsupported version (offset 4),
        unreadable manifest, or payloads that don't match it
      ShapeMismatch: a tensor doesn't fit the configuration, named
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}", path=path, offset=0)
    if len(blob) < HEADER.size:
        raise FormatError("truncated header", path=path, offset=len(blob))
    _, version, length = HEADER.unpack_from(blob)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, want {VERSION}", path=path, offset=4)
    if HEADER.size + length > len(blob):
        raise FormatError(f"manifest of {length} bytes runs past the file", path=path, offset=8)
    try:
        manifest = json.loads(blob[HEADER.size : HEADER.size + length].decode("utf-8"))
        stored = ModelConfig.from_dict(manifest["model"])
        train = TrainConfig.from_dict(manifest["train"])
        entries = manifest["tensors"]
        optimizer = manifest["optimizer"]
        schedule = manifest["schedule"]
    except (ValueError, KeyError, TypeError, InvalidConfig) as e:
        raise FormatError(f"corrupt manifest: {e}", path=path, offset=HEADER.size) from e
    params = build_params(model or stored, seed=0)
    base = HEADER.size + length
    expected = {f"{kind}/{name}" for kind in KINDS for name in params}
    found = {e["name"] for e in entries}
    if model is not None:
        for entry in entries:
            name = entry["name"].partition("/")[2]
            if name in params and tuple(entry["shape"]) != params[name].shape:
                raise ShapeMismatch(name, params[name].shape, entry["shape"], path=path)
    if expected != found:
        missing = sorted(expected - found)[:3]
        extra = sorted(found - expected)[:3]
        raise FormatError(f"tensor set differs: missing {missing}, unexpected {extra}", path=path)
    for entry in entries:
        kind, _, name = entry["name"].partition("/")
        shape = tuple(entry["shape"])
        if shape != params[name].shape:
            raise ShapeMismatch(name, params[name].shape, shape, path=path)
        start = base + entry["offset"]
        count = int(np.prod(shape, dtype=np.int64))
        if start + count * PAYLOAD_DTYPE.itemsize > len(blob):
            raise FormatError(f"payload of {entry['name']} truncated", path=path, offset=start)
        if count:
            arr = np.frombuffer(blob, dtype=PAYLOAD_DTYPE, count=count, offset=start).reshape(shape)
        else:
            arr = np.zeros(shape, dtype=PAYLOAD_DTYPE)
        if kind == "param":
            params.load(name, arr)
        elif kind == "adam.m":
            params.m[name] = arr.astype(params.dtype)
        else:
            params.v[name] = arr.astype(params.dtype)
    params.step = int(optimizer["step"])
    best = schedule["best"]
    state = ScheduleState(
        float(optimizer["lr"]),
        math.inf if best is None else float(best),
        int(schedule["since_best"]),
        bool(schedule["stop"]),
    )
    logger.info("loaded checkpoint %s at epoch %d", path, manifest["epoch"])
    return Checkpoint(
        model or stored, train, params, int(manifest["epoch"]), state, [float(x) for x in manifest["losses"]]
    )
