"""A planar articulated figure and scripted motion for it.

The figure is a tree of bones hanging off an implicit torso centre.
Angles are in degrees in image coordinates (x right, y down, +90 points
down). A joint's absolute bone angle is its rest angle plus its own
scripted angle plus the scripted angles of every ancestor joint.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.pose import JOINT_NAMES, JOINTS, Pose

logger = logging.getLogger(__name__)

ROOT = -1


@dataclass(frozen=True)
class SkeletonSpec:
    """Bone tree of a figure.

    Attributes:
      names: joint names, index k labels pose joint k
      parent: parent joint index per joint, ROOT for the torso centre;
        parents come before their children
      length: bone length in pixels from parent to joint
      rest_angle: absolute bone direction in the rest pose, degrees
      thickness: half-width of the band around a bone that emits events
    """

    names: tuple[str, ...]
    parent: tuple[int, ...]
    length: tuple[float, ...]
    rest_angle: tuple[float, ...]
    thickness: float = 1.5

    def __post_init__(self):
        k = len(self.names)
        if not len(self.parent) == len(self.length) == len(self.rest_angle) == k:
            raise InvalidArgument("names, parent, length and rest_angle must have equal length")
        for j, p in enumerate(self.parent):
            if p != ROOT and not 0 <= p < j:
                raise InvalidArgument(f"joint {j} has parent {p}; parents must precede children")
        if any(length <= 0 for length in self.length):
            raise InvalidArgument("bone lengths must be positive")
        if self.thickness < 0:
            raise InvalidArgument("thickness must be >= 0")

    @property
    def K(self) -> int:  # pylint: disable=invalid-name
        """Number of joints."""
        return len(self.names)

    def ancestors(self, j: int) -> list[int]:
        """Joint indices above j, nearest first, torso excluded."""
        out = []
        p = self.parent[j]
        while p != ROOT:
            out.append(p)
            p = self.parent[p]
        return out

    def subtree(self, j: int) -> list[int]:
        """j and every joint below it."""
        return [k for k in range(self.K) if k == j or j in self.ancestors(k)]


def default_skeleton(scale: float = 1.0, thickness: float = 1.5) -> SkeletonSpec:
    """The 13-joint figure, about 56 * scale pixels tall, facing the camera.

    "l_" joints sit on the image's +x side.
    """
    parent = [ROOT] * len(JOINT_NAMES)
    length = [0.0] * len(JOINT_NAMES)
    angle = [0.0] * len(JOINT_NAMES)

    def bone(name, par, dx, dy):
        k = JOINTS[name]
        parent[k] = ROOT if par is None else JOINTS[par]
        length[k] = math.hypot(dx, dy) * scale
        angle[k] = math.degrees(math.atan2(dy, dx))

    bone("head", None, 0, -20)
    for side, sign in (("l", 1), ("r", -1)):
        bone(f"{side}_shoulder", None, 8 * sign, -12)
        bone(f"{side}_elbow", f"{side}_shoulder", 2 * sign, 10)
        bone(f"{side}_wrist", f"{side}_elbow", 1 * sign, 9)
        bone(f"{side}_hip", None, 5 * sign, 12)
        bone(f"{side}_knee", f"{side}_hip", 1 * sign, 12)
        bone(f"{side}_ankle", f"{side}_knee", 0, 12)
    return SkeletonSpec(JOINT_NAMES, tuple(parent), tuple(length), tuple(angle), thickness)


@dataclass(frozen=True)
class Oscillation:
    """amplitude * sin(2 pi frequency t + phase); degrees for angles, pixels for translation."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def at(self, t: np.ndarray) -> np.ndarray:
        """Value at t seconds."""
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class StaticEpisode:
    """Joint ``root`` and everything below it hold still over [t_start, t_end) µs."""

    root: int
    t_start: int
    t_end: int


@dataclass
class MotionScript:
    """Scripted joint angles, static episodes and global translation.

    Each joint runs on its own clock that stops during any episode
    covering it, so angles hold exactly still and resume continuously.
    The global translation clock stops during every episode, keeping
    the torso, and so any frozen subtree hanging off it, in place.

    Attributes:
      angles: joint index -> oscillations summed into that joint's angle
      episodes: static intervals
      translation: (x, y) oscillations of the torso centre
      origin: torso centre at rest, sensor pixels
    """

    angles: dict[int, list[Oscillation]] = field(default_factory=dict)
    episodes: list[StaticEpisode] = field(default_factory=list)
    translation: tuple[Optional[Oscillation], Optional[Oscillation]] = (None, None)
    origin: tuple[float, float] = (64.0, 64.0)

    def validate(self, spec: SkeletonSpec, duration: int) -> None:
        """Episodes inside [0, duration], rooted at joints hanging off the torso."""
        for e in self.episodes:
            if not 0 <= e.t_start <= e.t_end <= duration:
                raise InvalidArgument(f"episode {e} outside [0, {duration}]")
            if not 0 <= e.root < spec.K or spec.parent[e.root] != ROOT:
                raise InvalidArgument(f"episode root {e.root} must be a joint attached to the torso")
        for j in self.angles:
            if not 0 <= j < spec.K:
                raise InvalidArgument(f"no joint {j}")

    def _clock(self, t: np.ndarray, episodes: Sequence[StaticEpisode]) -> np.ndarray:
        """Seconds of t (µs) not covered by any of the episodes."""
        t = np.asarray(t, dtype=np.float64)
        frozen = np.zeros_like(t)
        spans = sorted((e.t_start, e.t_end) for e in episodes)
        merged: list[list[float]] = []
        for s, e in spans:
            if merged and s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        for s, e in merged:
            frozen += np.clip(t - s, 0, e - s)
        return (t - frozen) * 1e-6

    def joint_clock(self, spec: SkeletonSpec, j: int, t: np.ndarray) -> np.ndarray:
        """Effective seconds for joint j at times t (µs)."""
        return self._clock(t, [e for e in self.episodes if j in spec.subtree(e.root)])

    def theta(self, spec: SkeletonSpec, j: int, t: np.ndarray) -> np.ndarray:
        """Scripted angle of joint j in degrees at times t (µs)."""
        t = np.asarray(t, dtype=np.float64)
        if not self.angles.get(j):
            return np.zeros_like(t)
        clock = self.joint_clock(spec, j, t)
        return sum(osc.at(clock) for osc in self.angles[j])

    def root_position(self, t: np.ndarray) -> np.ndarray:
        """Torso centre at times t (µs), (n, 2)."""
        t = np.asarray(t, dtype=np.float64)
        clock = self._clock(t, self.episodes)
        out = np.empty(t.shape + (2,))
        for axis, osc in enumerate(self.translation):
            out[..., axis] = self.origin[axis] + (osc.at(clock) if osc is not None else 0.0)
        return out


def joint_positions(spec: SkeletonSpec, script: MotionScript, t) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward kinematics.

    Returns:
      (joints (n, K, 2), torso centre (n, 2)) for times t (µs, shape (n,))
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    root = script.root_position(t)
    theta = np.stack([script.theta(spec, j, t) for j in range(spec.K)], axis=1)  # n, K
    joints = np.empty((len(t), spec.K, 2))
    total = np.empty_like(theta)
    for j in range(spec.K):
        p = spec.parent[j]
        total[:, j] = theta[:, j] + (total[:, p] if p != ROOT else 0.0)
        angle = np.radians(spec.rest_angle[j] + total[:, j])
        base = root if p == ROOT else joints[:, p]
        joints[:, j, 0] = base[:, 0] + spec.length[j] * np.cos(angle)
        joints[:, j, 1] = base[:, 1] + spec.length[j] * np.sin(angle)
    return joints, root


def forward_kinematics(spec: SkeletonSpec, script: MotionScript, t: float) -> Pose:
    """Pose at one time t (µs), every joint visible."""
    joints, _ = joint_positions(spec, script, [t])
    return Pose(joints[0], np.ones(spec.K, dtype=bool))
