"""2-D poses, the default 13-joint skeleton and the pose label file.

A pose label file has one line per frame, each a JSON array of K
``[x, y, visible]`` triples in input pixel coordinates, e.g.

  [[120.5, 40.0, 1], [100.0, 70.25, 1], ...]
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from evpose.exceptions import FormatError, InvalidArgument
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

JOINT_NAMES = (
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)
JOINTS = {name: k for k, name in enumerate(JOINT_NAMES)}

# segments between labelled joints, used for drawing and limb-event assignment
BONES = (
    (JOINTS["head"], JOINTS["l_shoulder"]),
    (JOINTS["head"], JOINTS["r_shoulder"]),
    (JOINTS["l_shoulder"], JOINTS["r_shoulder"]),
    (JOINTS["l_shoulder"], JOINTS["l_elbow"]),
    (JOINTS["l_elbow"], JOINTS["l_wrist"]),
    (JOINTS["r_shoulder"], JOINTS["r_elbow"]),
    (JOINTS["r_elbow"], JOINTS["r_wrist"]),
    (JOINTS["l_shoulder"], JOINTS["l_hip"]),
    (JOINTS["r_shoulder"], JOINTS["r_hip"]),
    (JOINTS["l_hip"], JOINTS["r_hip"]),
    (JOINTS["l_hip"], JOINTS["l_knee"]),
    (JOINTS["l_knee"], JOINTS["l_ankle"]),
    (JOINTS["r_hip"], JOINTS["r_knee"]),
    (JOINTS["r_knee"], JOINTS["r_ankle"]),
)

# pivot joint -> (index into BONES of its distal bone, joints carried by the rotation)
LIMB_PIVOTS = {
    "l_elbow": (BONES.index((JOINTS["l_elbow"], JOINTS["l_wrist"])), (JOINTS["l_wrist"],)),
    "r_elbow": (BONES.index((JOINTS["r_elbow"], JOINTS["r_wrist"])), (JOINTS["r_wrist"],)),
    "l_knee": (BONES.index((JOINTS["l_knee"], JOINTS["l_ankle"])), (JOINTS["l_ankle"],)),
    "r_knee": (BONES.index((JOINTS["r_knee"], JOINTS["r_ankle"])), (JOINTS["r_ankle"],)),
}


@dataclass(frozen=True)
class Pose:
    """K joints with visibility flags, in input pixel units.

    Attributes:
      joints: float64 array of shape (K, 2), columns x then y
      visible: bool array of shape (K,)
    """

    joints: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 2)
        visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(joints) != len(visible):
            raise InvalidArgument(
                f"{len(joints)} joints but {len(visible)} visibility flags"
            )
        if not np.all(np.isfinite(joints)):
            raise InvalidArgument("pose coordinates must be finite")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visible", visible)

    @property
    def K(self) -> int:  # pylint: disable=invalid-name
        """Number of joints."""
        return len(self.joints)

    def bbox(self) -> tuple[float, float, float, float]:
        """Tight (x0, y0, x1, y1) box around the visible joints."""
        if not self.visible.any():
            raise InvalidArgument("pose has no visible joints")
        pts = self.joints[self.visible]
        return (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )

    def bbox_center(self) -> tuple[float, float]:
        """Centre of bbox()."""
        x0, y0, x1, y1 = self.bbox()
        return (x0 + x1) / 2, (y0 + y1) / 2

    def moved(self, joints: np.ndarray) -> "Pose":
        """Same visibility, new coordinates."""
        return Pose(joints, self.visible.copy())

    def to_list(self) -> list[list]:
        """The label-file row for this pose."""
        return [
            [float(x), float(y), int(v)]
            for (x, y), v in zip(self.joints, self.visible)
        ]

    @classmethod
    def from_list(cls, row) -> "Pose":
        """Parses one label-file row."""
        arr = np.asarray(row, dtype=np.float64).reshape(-1, 3)
        return cls(arr[:, :2], arr[:, 2] > 0)


def union_center(poses: list[Pose]) -> tuple[float, float]:
    """Centre of the box around every visible joint of every pose."""
    boxes = [p.bbox() for p in poses if p.visible.any()]
    if not boxes:
        raise InvalidArgument("no visible joints in any pose")
    arr = np.asarray(boxes)
    return (
        (arr[:, 0].min() + arr[:, 2].max()) / 2,
        (arr[:, 1].min() + arr[:, 3].max()) / 2,
    )


def read_poses(path: PathArg) -> list[Pose]:
    """Reads a pose label file, one Pose per line."""
    poses = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                poses.append(Pose.from_list(json.loads(line)))
            except (ValueError, TypeError) as e:
                raise FormatError(f"bad pose row: {e}", path=path, line=lineno) from e
    logger.debug("read %d poses from %s", len(poses), path)
    return poses


def write_poses(poses: list[Pose], path: PathArg) -> None:
    """Writes poses in label-file format."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for pose in poses:
            f.write(json.dumps(pose.to_list(), separators=(",", ":")))
            f.write("\n")
