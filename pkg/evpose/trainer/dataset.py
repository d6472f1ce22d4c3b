"""T-frame training clips cut from a directory of recorded sequences.

Expects the synthgen layout: root/manifest.jsonl with one object per
sequence (id, split, action, ...) and root/seq_<id>/{events.evt1,
poses.jsonl}, one pose per frame interval starting at t = 0.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from evpose.events import (
    DEFAULT_INTERVAL,
    CropWindow,
    accumulate_frame,
    event_centroid,
    normalize_frame,
    read_events,
    slice_packets,
)
from evpose.events.stream import empty_events
from evpose.exceptions import FormatError, InvalidArgument
from evpose.pose import Pose, read_poses, union_center
from evpose.trainer.augment import Sample, clip_visibility, random_augment
from evpose.trainer.config import TrainConfig
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
CROPS = ("pose", "events")


def sequence_dir(root: PathArg, seq_id: str) -> Path:
    """Where a sequence's files live."""
    return Path(root) / f"seq_{seq_id}"


def read_manifest(root: PathArg) -> list[dict]:
    """Parses manifest.jsonl, one dict per sequence."""
    path = Path(root) / MANIFEST
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                row["id"] = str(row["id"])
                row["split"] = str(row["split"])
            except (ValueError, KeyError, TypeError) as e:
                raise FormatError(f"bad manifest entry: {e}", path=path, line=lineno) from e
            rows.append(row)
    return rows


@dataclass
class Recording:
    """One loaded recording, already cut into per-frame packets."""

    id: str
    action: str
    packets: list[np.ndarray]
    poses: list[Pose]
    width: int
    height: int
    interval: int


@dataclass
class Clip:
    """A prepared clip, in crop coordinates.

    Attributes:
      inputs: (T, 2, S, S) normalized event frames
      poses: T ground-truth poses
      window: crop placement in sensor coordinates
    """

    inputs: np.ndarray
    poses: list[Pose]
    window: CropWindow
    sequence: str
    action: str
    start: int


def load_sequence(root: PathArg, row: dict) -> Recording:
    """Reads one sequence and slices it into one packet per labelled frame."""
    folder = sequence_dir(root, row["id"])
    stream = read_events(folder / "events.evt1")
    poses = read_poses(folder / "poses.jsonl")
    interval = int(row.get("interval", DEFAULT_INTERVAL))
    packets = slice_packets(stream, interval, t0=0, duration=len(poses) * interval)[: len(poses)]
    packets += [empty_events()] * (len(poses) - len(packets))
    return Recording(
        row["id"], str(row.get("action", "unknown")), packets, poses, stream.width, stream.height, interval
    )


class ClipDataset:
    """Clips of T consecutive frames over one split of a dataset directory.

    Sequences load eagerly, so clip preparation is safe to run from
    several threads at once.

    Arguments:
      root: dataset directory
      split: "train", "test", or None for every sequence
      T: frames per clip
      stride: frames between clip starts, T by default
      joints: keep only these joint indices in labels
    """

    def __init__(
        self,
        root: PathArg,
        split: Optional[str] = "train",
        T: int = 16,  # pylint: disable=invalid-name
        stride: Optional[int] = None,
        joints: Optional[Sequence[int]] = None,
    ):
        if T < 1:
            raise InvalidArgument(f"T must be >= 1, got {T}")
        self.root = Path(root)
        self.split = split
        self.T = T  # pylint: disable=invalid-name
        self.stride = stride or T
        self.joints = None if joints is None else list(joints)
        rows = [r for r in read_manifest(root) if split is None or r["split"] == split]
        self.sequences = [load_sequence(root, r) for r in rows]
        self.clips: list[tuple[int, int]] = []
        for i, seq in enumerate(self.sequences):
            for start in range(0, len(seq.poses) - T + 1, self.stride):
                self.clips.append((i, start))
        logger.info(
            "%d clips of %d frames from %d %s sequences in %s",
            len(self.clips),
            T,
            len(self.sequences),
            split or "all",
            root,
        )

    def __len__(self):
        return len(self.clips)

    def __repr__(self):
        return f"{self.__class__.__name__}({self.root}, {self.split}, {len(self)} clips)"

    @property
    def interval(self) -> int:
        """Frame interval of the first sequence."""
        return self.sequences[0].interval if self.sequences else DEFAULT_INTERVAL

    def prepare(
        self,
        index: int,
        input_size: int,
        config: Optional[TrainConfig] = None,
        rng: Optional[np.random.Generator] = None,
        crop: str = "pose",
    ) -> Clip:
        """Crops, optionally augments, and accumulates one clip.

        Arguments:
          index: clip number
          input_size: crop side in pixels
          config: count cap and augmentation switches
          rng: augmentation draws; None disables augmentation
          crop: "pose" centres the crop on the box around every visible
            joint in the clip, "events" on the clip's event centroid
        """
        if crop not in CROPS:
            raise InvalidArgument(f"crop {crop!r} not one of {CROPS}")
        config = config or TrainConfig()
        seq_index, start = self.clips[index]
        seq = self.sequences[seq_index]
        packets = seq.packets[start : start + self.T]
        poses = seq.poses[start : start + self.T]
        if crop == "pose" and any(p.visible.any() for p in poses):
            cx, cy = union_center(poses)
            center = (int(math.floor(cx + 0.5)), int(math.floor(cy + 0.5)))
        else:
            center = event_centroid(np.concatenate(packets), seq.width, seq.height)
        window = CropWindow(center, input_size)
        sample = Sample(
            [window.apply_events(p) for p in packets],
            [clip_visibility(window.apply_pose(p), input_size, input_size) for p in poses],
            input_size,
            input_size,
        )
        if rng is not None:
            sample = random_augment(sample, rng, config)
        inputs = np.stack(
            [
                normalize_frame(accumulate_frame(p, input_size, input_size), config.count_cap).grid
                for p in sample.packets
            ]
        )
        poses = sample.poses
        if self.joints is not None:
            poses = [Pose(p.joints[self.joints], p.visible[self.joints]) for p in poses]
        return Clip(inputs, poses, window, seq.id, seq.action, start)
